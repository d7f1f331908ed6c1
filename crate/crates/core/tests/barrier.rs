use charter_core::polytope::{
    barrier_gradient, barrier_state, barrier_value, leverage_scores, volumetric_center,
};
use charter_core::{CenteringOptions, Error, Polyhedron};
use proptest::prelude::*;

/// Dense `H`, `log det H` and leverages computed from scratch.
struct Naive {
    logdet: f64,
    sigmas: Vec<f64>,
}

fn naive(rows: &[(Vec<f64>, f64)], x: &[f64]) -> Naive {
    let d = x.len();
    let mut units = Vec::new();
    let mut h = vec![vec![0.0; d]; d];
    for (a, b) in rows {
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let a: Vec<f64> = a.iter().map(|v| v / norm).collect();
        let s = a.iter().zip(x).map(|(p, q)| p * q).sum::<f64>() - b / norm;
        let u: Vec<f64> = a.iter().map(|v| v / s).collect();
        for i in 0..d {
            for j in 0..d {
                h[i][j] += u[i] * u[j];
            }
        }
        units.push(u);
    }
    // Gauss-Jordan with partial pivoting on [H | I].
    let mut aug: Vec<Vec<f64>> = h
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..d).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    let mut logdet = 0.0;
    for c in 0..d {
        let p = (c..d)
            .max_by(|&i, &j| aug[i][c].abs().total_cmp(&aug[j][c].abs()))
            .unwrap();
        aug.swap(c, p);
        let piv = aug[c][c];
        logdet += piv.abs().ln();
        for v in aug[c].iter_mut() {
            *v /= piv;
        }
        for r in 0..d {
            if r != c {
                let f = aug[r][c];
                let pivot_row = aug[c].clone();
                for (v, pv) in aug[r].iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
    }
    let sigmas = units
        .iter()
        .map(|u| {
            (0..d)
                .map(|i| (0..d).map(|j| u[i] * aug[i][d + j] * u[j]).sum::<f64>())
                .sum()
        })
        .collect();
    Naive { logdet, sigmas }
}

fn cube_rows(d: usize) -> Vec<(Vec<f64>, f64)> {
    let mut rows = Vec::new();
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut a = vec![0.0; d];
            a[i] = s;
            rows.push((a, -1.0));
        }
    }
    rows
}

/// The unit box plus `extra` rows `a . x >= b` with the origin strictly inside.
fn polytope_strategy() -> impl Strategy<Value = (usize, Vec<(Vec<f64>, f64)>, Vec<f64>)> {
    (2usize..=8).prop_flat_map(|d| {
        let row = (prop::collection::vec(-1.0f64..1.0, d), 0.05f64..1.5);
        (
            Just(d),
            prop::collection::vec(row, 0..12),
            prop::collection::vec(-0.02f64..0.02, d),
        )
            .prop_map(|(d, extra, x)| {
                let mut rows = cube_rows(d);
                for (a, depth) in extra {
                    if a.iter().map(|v| v * v).sum::<f64>() > 1e-3 {
                        rows.push((a, -depth));
                    }
                }
                (d, rows, x)
            })
    })
}

#[test]
fn cube_value_is_half_d_log_two() {
    for d in 1..=6 {
        let p = Polyhedron::hypercube(&vec![0.0; d], 2.0).unwrap();
        let v = barrier_value(&p, &vec![0.0; d]).unwrap();
        assert!((v - d as f64 / 2.0 * 2f64.ln()).abs() < 1e-10, "d = {d}");
    }
}

#[test]
fn square_hessian_and_leverages() {
    let p = Polyhedron::hypercube(&[0.0, 0.0], 2.0).unwrap();
    let st = barrier_state(&p, &[0.0, 0.0]).unwrap();
    assert_eq!(st.hessian().as_slice(), &[2.0, 0.0, 0.0, 2.0]);
    assert!((st.value() - 2f64.ln()).abs() < 1e-15);
    for s in st.sigmas() {
        assert!((s - 0.5).abs() < 1e-15);
    }
}

#[test]
fn duplicate_rows_split_their_leverage() {
    let mut rows = cube_rows(2);
    rows.push(rows[0].clone());
    let p = Polyhedron::new(2, &rows, &[0.0, 0.0]).unwrap();
    let x = [0.1, -0.3];
    let single =
        leverage_scores(&Polyhedron::new(2, &cube_rows(2), &[0.0, 0.0]).unwrap(), &x).unwrap();
    let sig = leverage_scores(&p, &x).unwrap();
    assert!((sig[0] - sig[4]).abs() < 1e-14);
    assert!(sig[0] < single[0]);
    assert!((sig.iter().sum::<f64>() - 2.0).abs() < 1e-12);
}

#[test]
fn exterior_point_is_rejected() {
    let p = Polyhedron::hypercube(&[0.0, 0.0], 2.0).unwrap();
    assert_eq!(barrier_value(&p, &[1.0, 0.0]), Err(Error::NotInterior));
    assert_eq!(barrier_value(&p, &[3.0, 0.0]), Err(Error::NotInterior));
}

#[test]
fn cube_center_from_any_warm_start() {
    let opts = CenteringOptions::default();
    for d in 1..=5 {
        let p = Polyhedron::hypercube(&vec![0.0; d], 2.0).unwrap();
        let start: Vec<f64> = (0..d).map(|i| 0.9 - 0.35 * i as f64).collect();
        let st = volumetric_center(&p, &start, &opts).unwrap();
        assert!(
            st.x().iter().all(|v| v.abs() < 1e-7),
            "d = {d}: {:?}",
            st.x()
        );
    }
}

#[test]
fn triangle_center_matches_grid_search() {
    let rows = vec![
        (vec![1.0, 0.0], 0.0),
        (vec![0.0, 1.0], 0.0),
        (vec![-1.0, -1.0], -1.0),
    ];
    let p = Polyhedron::new(2, &rows, &[0.25, 0.25]).unwrap();
    let st = volumetric_center(&p, &[0.2, 0.3], &CenteringOptions::default()).unwrap();

    let value = |x: &[f64]| naive(&rows, x).logdet / 2.0;
    // Coarse grid, then successively finer grids around the best point.
    let mut best = [1.0 / 3.0, 1.0 / 3.0];
    let mut h = 0.02;
    while h >= 1e-5 {
        let mut cand = best;
        let mut cand_v = value(&best);
        for i in -10..=10 {
            for j in -10..=10 {
                let x = [best[0] + i as f64 * h, best[1] + j as f64 * h];
                if x[0] <= 0.0 || x[1] <= 0.0 || x[0] + x[1] >= 1.0 {
                    continue;
                }
                let v = value(&x);
                if v < cand_v {
                    cand = x;
                    cand_v = v;
                }
            }
        }
        best = cand;
        h /= 4.0;
    }
    assert!((st.x()[0] - best[0]).abs() < 1e-4);
    assert!((st.x()[1] - best[1]).abs() < 1e-4);
}

#[test]
fn shrinking_slacks_shifts_value_by_d_log_t() {
    let rows = vec![
        (vec![1.0, 0.0], -1.0),
        (vec![0.0, 1.0], -0.5),
        (vec![-1.0, -2.0], -2.0),
    ];
    let x = [0.1, 0.2];
    let p = Polyhedron::new(2, &rows, &x).unwrap();
    let v = barrier_value(&p, &x).unwrap();
    for t in [0.5, 2.0, 3.7] {
        let slacks = p.slacks(&x);
        let scaled: Vec<(Vec<f64>, f64)> = rows
            .iter()
            .zip(&slacks)
            .map(|((a, b), s)| {
                let n = a.iter().map(|v| v * v).sum::<f64>().sqrt();
                (a.clone(), b - (t - 1.0) * s * n)
            })
            .collect();
        let q = Polyhedron::new(2, &scaled, &x).unwrap();
        let w = barrier_value(&q, &x).unwrap();
        assert!((w - (v - 2.0 * f64::ln(t))).abs() < 1e-12, "t = {t}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn leverages_sum_to_dimension((d, rows, x) in polytope_strategy()) {
        let p = Polyhedron::new(d, &rows, &x).unwrap();
        let sig = leverage_scores(&p, &x).unwrap();
        prop_assert!((sig.iter().sum::<f64>() - d as f64).abs() <= 1e-6 * d as f64);
        prop_assert!(sig.iter().all(|&s| s > 0.0 && s <= 1.0 + 1e-12));
    }

    #[test]
    fn matches_dense_oracle((d, rows, x) in polytope_strategy()) {
        let p = Polyhedron::new(d, &rows, &x).unwrap();
        let st = barrier_state(&p, &x).unwrap();
        let oracle = naive(&rows, &x);
        prop_assert!((st.value() - oracle.logdet / 2.0).abs() < 1e-9 * (1.0 + oracle.logdet.abs()));
        for (a, b) in st.sigmas().iter().zip(&oracle.sigmas) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn invariant_under_row_scaling((d, rows, x) in polytope_strategy(), scale in 0.01f64..100.0) {
        let scaled: Vec<(Vec<f64>, f64)> = rows
            .iter()
            .map(|(a, b)| (a.iter().map(|v| v * scale).collect(), b * scale))
            .collect();
        let p = Polyhedron::new(d, &rows, &x).unwrap();
        let q = Polyhedron::new(d, &scaled, &x).unwrap();
        let (a, b) = (barrier_state(&p, &x).unwrap(), barrier_state(&q, &x).unwrap());
        prop_assert!((a.value() - b.value()).abs() < 1e-10);
        for (s, t) in a.sigmas().iter().zip(b.sigmas()) {
            prop_assert!((s - t).abs() < 1e-10);
        }
    }

    #[test]
    fn invariant_under_translation((d, rows, x) in polytope_strategy(), shift in -50.0f64..50.0) {
        let v: Vec<f64> = (0..d).map(|i| shift * (i as f64 + 1.0)).collect();
        let p = Polyhedron::new(d, &rows, &x).unwrap();
        let q = p.translated(&v);
        let y: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + b).collect();
        let (a, b) = (barrier_state(&p, &x).unwrap(), barrier_state(&q, &y).unwrap());
        prop_assert!((a.value() - b.value()).abs() < 1e-9);
        for (s, t) in a.sigmas().iter().zip(b.sigmas()) {
            prop_assert!((s - t).abs() < 1e-9);
        }
    }

    #[test]
    fn gradient_matches_finite_differences((d, rows, x) in polytope_strategy()) {
        let p = Polyhedron::new(d, &rows, &x).unwrap();
        let g = barrier_gradient(&p, &x).unwrap();
        let h = 1e-6;
        for i in 0..d {
            let mut up = x.clone();
            let mut down = x.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (barrier_value(&p, &up).unwrap() - barrier_value(&p, &down).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() < 1e-5 * (1.0 + g[i].abs()), "i = {} fd = {} g = {}", i, fd, g[i]);
        }
    }

    #[test]
    fn center_is_stationary((d, rows, x) in polytope_strategy()) {
        let p = Polyhedron::new(d, &rows, &x).unwrap();
        let opts = CenteringOptions::default();
        let st = volumetric_center(&p, &x, &opts).unwrap();
        let g = barrier_gradient(&p, st.x()).unwrap();
        prop_assert!(st.inv_quad(&g).sqrt() <= opts.tol * 10.0);
        prop_assert!(st.value() <= barrier_value(&p, &x).unwrap() + 1e-12);
    }
}
