use charter_core::problems::{
    build_problem, catalog, excess_risk, orthonormalize, sample_gradient, HardInstance, Problem,
    ProblemConfig,
};
use charter_core::rng::{standard_normal, stream, Stage};
use charter_core::Error;
use proptest::prelude::*;

fn canonical(alpha: f64, sigma: f64) -> HardInstance {
    HardInstance::new(
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![1.0, 1.0],
        alpha,
        sigma,
        0.0,
        2.0,
    )
    .unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `i(x)` and `s_i(x)` by scanning every index.
fn brute_force(h: &HardInstance, x: &[f64]) -> (usize, f64) {
    let d = h.basis().len();
    let off = 1.0 / (d as f64).sqrt();
    let r: Vec<f64> = (0..d)
        .map(|j| dot(&h.basis()[j], x) - h.signs()[j] * off)
        .collect();
    let mut best = 0;
    for j in 1..d {
        if r[j].abs() > r[best].abs() {
            best = j;
        }
    }
    (best, if r[best] >= 0.0 { 1.0 } else { -1.0 })
}

#[test]
fn canonical_values() {
    let h = canonical(1.0, 0.0);
    assert!((h.value(&[0.0, 0.0]) - 0.5f64.sqrt()).abs() < 1e-15);
    assert_eq!(h.active_index(&[0.0, 0.0]), 0);
    assert_eq!(h.sign(0, &[0.0, 0.0]), -1.0);
    assert_eq!(h.subgradient(&[0.0, 0.0]), vec![-1.0, 0.0]);
    let star = h.minimizer();
    assert_eq!(h.value(&star), 0.0);
    assert!(excess_risk(&h, &star).unwrap().abs() < 1e-15);
    let mut rng = stream(0, 0, 0, Stage::Test);
    for _ in 0..100 {
        let (g, s) = h.oracle_split(&[0.0, 0.0], &mut rng);
        assert_eq!(s, -1.0);
        assert_eq!(g, vec![1.0, 0.0]);
        assert_eq!(h.oracle(&[0.0, 0.0], &mut rng), vec![-1.0, 0.0]);
    }
}

#[test]
fn oracle_mean_and_sign_rule() {
    let h = HardInstance::random(4, 0.7, 1.0, 1.0, 2.0, 13).unwrap();
    let mut rng = stream(1, 0, 0, Stage::Test);
    let x = [0.3, -0.5, 0.2, 0.6];
    let draws = 100_000;
    let mut sum = [0.0; 4];
    for _ in 0..draws {
        for (s, g) in sum.iter_mut().zip(h.oracle(&x, &mut rng)) {
            *s += g;
        }
    }
    let (i, s) = brute_force(&h, &x);
    for (c, total) in sum.iter().enumerate() {
        let expected = h.alpha() * h.basis()[i][c] * s;
        assert!((total / draws as f64 - expected).abs() < 0.02);
    }
    let mut prng = stream(2, 0, 0, Stage::Test);
    for _ in 0..10_000 {
        let y: Vec<f64> = (0..4)
            .map(|_| standard_normal(&mut prng).clamp(-1.0, 1.0))
            .collect();
        let (_, sign) = h.oracle_split(&y, &mut rng);
        assert_eq!(sign, brute_force(&h, &y).1);
        assert_eq!(h.active_index(&y), brute_force(&h, &y).0);
    }
}

#[test]
fn catalog_is_complete() {
    for key in catalog() {
        let p = build_problem(&key, &ProblemConfig::new(3)).unwrap();
        assert_eq!(p.name(), key);
        assert_eq!(p.dim(), 3);
    }
    assert!(matches!(
        build_problem("ridge", &ProblemConfig::new(3)),
        Err(Error::UnknownProblem(_))
    ));
}

#[test]
fn dataset_noise_levels() {
    let cfg = ProblemConfig {
        sigma_g: 2.0,
        sigma_f: 0.5,
        ..ProblemConfig::new(4)
    };
    let p = build_problem("max-abs", &cfg).unwrap();
    let n = 50_000;
    let data = p.sample_dataset(n, &mut stream(4, 0, 0, Stage::Test));
    assert_eq!((data.len(), data.dim()), (n, 4));
    let sq: f64 = (0..n)
        .map(|i| data.gradient_noise(i).iter().map(|v| v * v).sum::<f64>())
        .sum();
    assert!((sq / n as f64 / 4.0 - 1.0).abs() < 0.03);
    let lf: f64 = (0..n).map(|i| data.loss_noise(i).powi(2)).sum();
    assert!((lf / n as f64 / 0.25 - 1.0).abs() < 0.03);
    let mut g = vec![0.0; 4];
    let x = [0.1, 0.2, 0.3, 0.4];
    sample_gradient(p.as_ref(), 0, &x, &data, 7, &mut g);
    let mut base = vec![0.0; 4];
    p.client_subgradient(0, &x, &mut base);
    for ((a, b), xi) in g.iter().zip(&base).zip(data.gradient_noise(7)) {
        assert_eq!(*a, b + xi);
    }
}

/// `(catalog index, d, seed, clients, x, y)`.
fn case_strategy() -> impl Strategy<Value = (usize, usize, u64, usize, Vec<f64>, Vec<f64>)> {
    (0usize..3, 2usize..6, 0u64..500, 1usize..5).prop_flat_map(|(which, d, seed, clients)| {
        let point = prop::collection::vec(-1.0f64..1.0, d);
        (
            Just(which),
            Just(d),
            Just(seed),
            Just(clients),
            point.clone(),
            point,
        )
    })
}

fn build(which: usize, d: usize, seed: u64, clients: usize) -> Box<dyn Problem> {
    let cfg = ProblemConfig {
        clients,
        seed,
        alpha: 0.5,
        ..ProblemConfig::new(d)
    };
    build_problem(catalog()[which].as_str(), &cfg).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_basis_is_orthonormal(d in 2usize..9, seed in 0u64..1000) {
        let h = HardInstance::random(d, 1.0, 1.0, 1.0, 2.0, seed).unwrap();
        for i in 0..d {
            for j in 0..d {
                let e = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot(&h.basis()[i], &h.basis()[j]) - e).abs() < 1e-12);
            }
        }
        let star = h.minimizer();
        prop_assert!(h.value(&star) < 1e-12);
        prop_assert!(((star.iter().map(|v| v * v).sum::<f64>()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gram_schmidt_rejects_dependent_rows(a in prop::collection::vec(-1.0f64..1.0, 3)) {
        prop_assume!(a.iter().map(|v| v * v).sum::<f64>() > 1e-3);
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        prop_assert!(orthonormalize(vec![a, b, vec![1.0, 0.0, 0.0]]).is_none());
    }

    #[test]
    fn hard_instance_is_lipschitz(
        seed in 0u64..1000,
        x in prop::collection::vec(-1.0f64..1.0, 5),
        y in prop::collection::vec(-1.0f64..1.0, 5),
        alpha in 0.01f64..1.0,
    ) {
        let h = HardInstance::random(5, alpha, 0.0, 0.0, 2.0, seed).unwrap();
        let dist = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!((h.value(&x) - h.value(&y)).abs() <= alpha * dist + 1e-12);
        let g = h.subgradient(&x);
        prop_assert!((g.iter().map(|v| v * v).sum::<f64>().sqrt() - alpha).abs() < 1e-12);
    }

    #[test]
    fn subgradient_inequality((which, d, seed, clients, x, y) in case_strategy()) {
        let p = build(which, d, seed, clients);
        let fx = p.true_loss(&x).unwrap();
        let fy = p.true_loss(&y).unwrap();
        let g = p.true_subgradient(&x).unwrap();
        let lin: f64 = g.iter().zip(y.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
        prop_assert!(fy >= fx + lin - 1e-12);
        prop_assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1.0 + 1e-12);
        prop_assert!(excess_risk(p.as_ref(), &x).unwrap() >= -1e-12);
    }

    #[test]
    fn client_losses_average_to_the_population((which, d, seed, clients, x, _y) in case_strategy()) {
        let p = build(which, d, seed, clients);
        let clients = if p.name() == "hetero-quadratic" { clients } else { 1 };
        let avg = (0..clients).map(|c| p.client_loss(c, &x)).sum::<f64>() / clients as f64;
        prop_assert!((avg - p.true_loss(&x).unwrap()).abs() < 1e-12);
        let mut grad = vec![0.0; d];
        let mut g = vec![0.0; d];
        for c in 0..clients {
            p.client_subgradient(c, &x, &mut g);
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b / clients as f64);
        }
        for (a, b) in grad.iter().zip(p.true_subgradient(&x).unwrap()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn minimum_loss_matches_grid_search() {
    for key in catalog() {
        let cfg = ProblemConfig {
            clients: 3,
            seed: 4,
            ..ProblemConfig::new(2)
        };
        let p = build_problem(&key, &cfg).unwrap();
        let mut best = f64::INFINITY;
        let steps = 400;
        for i in 0..=steps {
            for j in 0..=steps {
                let x = [
                    -1.0 + 2.0 * i as f64 / steps as f64,
                    -1.0 + 2.0 * j as f64 / steps as f64,
                ];
                best = best.min(p.true_loss(&x).unwrap());
            }
        }
        let min = p.min_loss().unwrap();
        assert!(min <= best + 1e-12, "{key}");
        assert!(best - min < 0.01, "{key}: grid {best} vs {min}");
    }
}
