use charter_core::client::{draw_batch, fresh_counts, ClientState};
use charter_core::dp::{derive_params_with, DerivedParams, PrivacyParams, Quantizer};
use charter_core::orchestrator::RunConfig;
use charter_core::problems::{build_problem, sample_loss, Domain, MaxAbs, Problem, ProblemConfig};
use charter_core::rng::{stream, Stage};
use proptest::prelude::*;

fn noiseless(target: &[f64]) -> MaxAbs {
    let d = target.len();
    MaxAbs::new(
        target.to_vec(),
        0.0,
        0.0,
        Domain {
            center: vec![0.0; d],
            side: 2.0,
        },
    )
    .unwrap()
}

fn params(
    problem: &dyn Problem,
    m: usize,
    n: usize,
    privacy: PrivacyParams,
    k: usize,
) -> DerivedParams {
    let cfg = RunConfig::new(m, n, privacy, 0);
    derive_params_with(&cfg.param_inputs(problem), 0.05, &privacy, Some(k)).unwrap()
}

#[test]
fn noiseless_gradient_decodes_exactly() {
    let f = noiseless(&[0.3, -0.2, 0.1]);
    let p = params(&f, 1, 300, PrivacyParams::non_private(0.1), 10);
    assert_eq!((p.sigma0_sq, p.j0), (0.0, 52));
    let q = Quantizer::new(p.d0, p.j0).unwrap();
    let mut c = ClientState::new(&f, 0, 300, 5).unwrap();
    let x = [0.9, 0.5, -0.4];
    let g = f.subgradient(&x);
    for round in 0..10 {
        let (est, fresh) = c.private_gradient(&f, &x, round, &p).unwrap();
        let est = est.unwrap();
        assert!(fresh > 0);
        for (a, b) in est.iter().zip(&g) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    let msg = c.gradient_round(&f, &x, 10, &p).unwrap();
    if let Some(v) = msg.decode(&q) {
        for (a, b) in v.iter().zip(&g) {
            assert!((a - b).abs() <= q.spacing());
        }
        assert_eq!(msg.bits, 3 * 52);
    }
}

#[test]
fn constant_loss_verification() {
    let f = noiseless(&[0.3, -0.2]);
    let n = 300;
    let p = params(&f, 1, n, PrivacyParams::non_private(0.1), 6);
    assert_eq!((p.sigma1_sq, p.j1), (0.0, 52));
    let q = Quantizer::new(p.d1, p.j1).unwrap();
    let c = ClientState::new(&f, 0, n, 1).unwrap();
    assert_eq!(c.verification_len(), n / 3);
    let x = vec![0.8, 0.8];
    let iterates = vec![x.clone(); p.k + 1];
    let msg = c.verification_estimates(&f, &iterates, &p).unwrap();
    assert_eq!(msg.bits, (p.k as u64 + 1) * 52);
    let value = f.value(&x);
    for v in msg.decode(&q) {
        assert!((v - value).abs() <= 2.0 * p.d1 * 2f64.powi(-(p.j1 as i32)));
    }
}

#[test]
fn seen_set_and_null_messages() {
    let f = noiseless(&[0.1, 0.1]);
    let n = 12;
    let p = params(&f, 1, n, PrivacyParams::non_private(0.1), 4);
    assert_eq!((p.batch_size(), p.learning_split()), (1, 8));
    let mut c = ClientState::new(&f, 0, n, 3).unwrap();
    let expected = fresh_counts(8, 1, 40, 3, 0);
    let mut nulls = 0;
    for (round, &t) in expected.iter().enumerate() {
        let msg = c.gradient_round(&f, &[0.0, 0.0], round, &p).unwrap();
        assert_eq!(msg.fresh, t);
        if t == 0 {
            assert!(msg.is_null());
            assert_eq!(msg.bits, 1);
            nulls += 1;
        }
    }
    assert_eq!(c.seen_count(), expected.iter().sum::<usize>());
    assert!(c.seen_count() <= 8);
    assert!(nulls >= 32);
}

#[test]
fn messages_are_reproducible() {
    let cfg = ProblemConfig {
        clients: 3,
        ..ProblemConfig::new(3)
    };
    let f = build_problem("hetero-quadratic", &cfg).unwrap();
    let p = params(f.as_ref(), 3, 600, PrivacyParams::new(0.02, 1e-5, 0.1), 20);
    let run = || {
        let mut c = ClientState::new(f.as_ref(), 2, 600, 77).unwrap();
        let grads: Vec<_> = (0..20)
            .map(|k| {
                c.gradient_round(f.as_ref(), &[0.1 * k as f64, 0.0, -0.1], k, &p)
                    .unwrap()
            })
            .collect();
        let iterates = vec![vec![0.2, -0.1, 0.0]; 21];
        (
            grads,
            c.verification_estimates(f.as_ref(), &iterates, &p).unwrap(),
        )
    };
    assert_eq!(run(), run());
}

#[test]
fn debiased_gradient_is_unbiased() {
    // Moderate noise, clipping almost never active.
    let cfg = ProblemConfig {
        sigma_g: 0.3,
        target: Some(vec![0.2, -0.4]),
        ..ProblemConfig::new(2)
    };
    let f = build_problem("max-abs", &cfg).unwrap();
    let n = 600;
    let p = params(f.as_ref(), 1, n, PrivacyParams::new(0.1, 1e-3, 0.1), 20);
    let x = [0.7, 0.1];
    let mut g = vec![0.0; 2];
    f.client_subgradient(0, &x, &mut g);
    let trials = 4000;
    let mut sum = [0.0; 2];
    let mut sq = [0.0; 2];
    for seed in 0..trials {
        let mut c = ClientState::new(f.as_ref(), 0, n, seed).unwrap();
        let (v, _) = c.private_gradient(f.as_ref(), &x, 0, &p).unwrap();
        let v = v.unwrap();
        for j in 0..2 {
            sum[j] += v[j];
            sq[j] += v[j] * v[j];
        }
    }
    for j in 0..2 {
        let mean = sum[j] / trials as f64;
        let sd = (sq[j] / trials as f64 - mean * mean).sqrt();
        assert!(
            (mean - g[j]).abs() < 5.0 * sd / (trials as f64).sqrt(),
            "coordinate {j}: mean {mean} vs {}",
            g[j]
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn loss_estimate_matches_direct_sum(
        seed in 0u64..1000,
        x in prop::collection::vec(-1.0f64..1.0, 2),
        sigma_f in 0.0f64..6.0,
    ) {
        let cfg = ProblemConfig { clients: 2, sigma_f, seed, ..ProblemConfig::new(2) };
        let f = build_problem("hetero-quadratic", &cfg).unwrap();
        let n = 301;
        let p = params(f.as_ref(), 2, n, PrivacyParams::non_private(0.1), 5);
        let c = ClientState::new(f.as_ref(), 1, n, seed).unwrap();
        let direct: f64 = (c.learning_len()..n)
            .map(|i| sample_loss(f.as_ref(), 1, &x, c.data(), i))
            .filter(|l| l.abs() <= p.g1)
            .sum::<f64>()
            * 3.0
            / n as f64;
        let fast = c.loss_estimate(f.as_ref(), &x, &p);
        prop_assert!((fast - direct).abs() < 1e-10 * (1.0 + direct.abs()), "{} vs {}", fast, direct);
    }

    #[test]
    fn fresh_counts_are_consistent(pool in 2usize..400, batch in 1usize..30, rounds in 1usize..60, seed in 0u64..100) {
        let batch = batch.min(pool - 1);
        let t = fresh_counts(pool, batch, rounds, seed, 1);
        prop_assert_eq!(t.len(), rounds);
        prop_assert!(t.iter().all(|&x| x <= batch));
        prop_assert!(t.iter().sum::<usize>() <= pool);
        prop_assert_eq!(t[0], batch);
        let b = draw_batch(pool, batch, &mut stream(seed, 1, 0, Stage::Learning));
        let mut sorted = b.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), batch);
        prop_assert!(b.iter().all(|&i| i < pool));
    }
}
