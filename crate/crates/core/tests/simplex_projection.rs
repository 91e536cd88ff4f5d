use proptest::prelude::*;
use stacking_core::linalg::SquareMatrix;
use stacking_core::simplex::{
    metric_projection_residual, project_simplex_euclidean, project_simplex_metric, MetricMatrix,
};

/// Brute-force minimizer of `f` over the 1-simplex on a uniform grid.
fn grid_1simplex(f: impl Fn(&[f64]) -> f64, step: f64) -> Vec<f64> {
    let n = (1.0 / step).round() as usize;
    let mut best = (f64::INFINITY, vec![0.0, 0.0]);
    for i in 0..=n {
        let s = i as f64 / n as f64;
        let w = [s, 1.0 - s];
        let v = f(&w);
        if v < best.0 {
            best = (v, w.to_vec());
        }
    }
    best.1
}

/// Coarse-to-fine grid search over the 2-simplex for a convex objective.
fn grid_2simplex(f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut center = [1.0 / 3.0, 1.0 / 3.0];
    let mut half_width: f64 = 0.5;
    let mut step: f64 = 1e-2;
    let mut best = (f64::INFINITY, vec![]);
    while step >= 1e-5 {
        let n = (2.0 * half_width / step).round() as i64;
        best = (f64::INFINITY, vec![]);
        for i in 0..=n {
            let a = (center[0] - half_width + i as f64 * step).clamp(0.0, 1.0);
            for j in 0..=n {
                let b = (center[1] - half_width + j as f64 * step).clamp(0.0, 1.0);
                if a + b > 1.0 {
                    continue;
                }
                let w = [a, b, 1.0 - a - b];
                let v = f(&w);
                if v < best.0 {
                    best = (v, w.to_vec());
                }
            }
        }
        center = [best.1[0], best.1[1]];
        half_width = 3.0 * step;
        step /= 10.0;
    }
    best.1
}

fn quad(a: &SquareMatrix, w: &[f64], v: &[f64]) -> f64 {
    let d: Vec<f64> = w.iter().zip(v).map(|(x, y)| x - y).collect();
    a.quad_form(&d)
}

#[test]
fn euclidean_projection_matches_dense_grid() {
    let v = [1.2, -0.2];
    let w = project_simplex_euclidean(&v).unwrap();
    let oracle = grid_1simplex(|w| (w[0] - v[0]).powi(2) + (w[1] - v[1]).powi(2), 1e-4);
    assert_eq!(w.as_slice(), &[1.0, 0.0]);
    assert!((w.as_slice()[0] - oracle[0]).abs() <= 1e-4);
}

#[test]
fn metric_projection_diag_example_matches_grid() {
    let a = SquareMatrix::diag(&[1.0, 4.0]);
    let v = [2.0, 0.0];
    let w = project_simplex_metric(&v, &MetricMatrix::new(a.clone()).unwrap()).unwrap();
    let oracle = grid_1simplex(|w| quad(&a, w, &v), 1e-5);
    assert!((w.as_slice()[0] - oracle[0]).abs() <= 1e-5);
    // closed form: minimize (s-2)² + 4(1-s)² on [0,1] → s = 1
    assert!((w.as_slice()[0] - 1.0).abs() < 1e-12);
}

#[test]
fn metric_projection_interior_example_matches_grid() {
    let a = SquareMatrix::from_row_major(3, vec![2.0, 0.3, -0.4, 0.3, 1.0, 0.2, -0.4, 0.2, 3.0]).unwrap();
    let v = [0.9, 0.6, -0.1];
    let w = project_simplex_metric(&v, &MetricMatrix::new(a.clone()).unwrap()).unwrap();
    let oracle = grid_2simplex(|w| quad(&a, w, &v));
    for (x, y) in w.as_slice().iter().zip(&oracle) {
        assert!((x - y).abs() <= 1e-4, "{w:?} vs {oracle:?}");
    }
}

#[test]
fn metric_projection_handles_ill_conditioned_metric() {
    // ONS-style accumulator after many nearly collinear rank-one updates
    let mut a = SquareMatrix::identity(4);
    for t in 0..5000 {
        let g = [1.0 + 1e-3 * (t % 7) as f64, 1.0, 0.9, 1.1 - 1e-3 * (t % 5) as f64];
        a.add_outer(1.0, &g);
    }
    let m = MetricMatrix::new(a).unwrap();
    let v = [3.0, -1.0, 0.5, -2.0];
    let w = project_simplex_metric(&v, &m).unwrap();
    assert!(metric_projection_residual(&w, &v, &m) <= 1e-8);
}

fn spd_matrix(k: usize) -> impl Strategy<Value = SquareMatrix> {
    proptest::collection::vec(-1.0f64..1.0, k * k).prop_map(move |entries| {
        let mut a = SquareMatrix::scaled_identity(k, 0.2);
        for row in entries.chunks(k) {
            a.add_outer(1.0, row);
        }
        a
    })
}

proptest! {
    #[test]
    fn euclidean_projection_is_on_simplex_and_idempotent(v in proptest::collection::vec(-5.0f64..5.0, 1..12)) {
        let w = project_simplex_euclidean(&v).unwrap();
        prop_assert!(w.as_slice().iter().all(|x| *x >= 0.0));
        prop_assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let again = project_simplex_euclidean(w.as_slice()).unwrap();
        for (a, b) in w.as_slice().iter().zip(again.as_slice()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn scaled_identity_metric_is_euclidean(v in proptest::collection::vec(-3.0f64..3.0, 2..8), c in 0.01f64..100.0) {
        let k = v.len();
        let e = project_simplex_euclidean(&v).unwrap();
        let m = project_simplex_metric(&v, &MetricMatrix::new(SquareMatrix::scaled_identity(k, c)).unwrap()).unwrap();
        for (a, b) in e.as_slice().iter().zip(m.as_slice()) {
            prop_assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn metric_projection_beats_vertices_and_euclidean_point(
        a in spd_matrix(4),
        v in proptest::collection::vec(-3.0f64..3.0, 4),
    ) {
        let metric = MetricMatrix::new(a.clone()).unwrap();
        let w = project_simplex_metric(&v, &metric).unwrap();
        let obj = quad(&a, w.as_slice(), &v);
        let slack = 1e-9 * (1.0 + obj.abs());
        for i in 0..4 {
            let mut e = vec![0.0; 4];
            e[i] = 1.0;
            prop_assert!(obj <= quad(&a, &e, &v) + slack);
        }
        let eu = project_simplex_euclidean(&v).unwrap();
        prop_assert!(obj <= quad(&a, eu.as_slice(), &v) + slack);
        prop_assert!(metric_projection_residual(&w, &v, &metric) <= 1e-8);
    }

    #[test]
    fn metric_projection_is_idempotent(a in spd_matrix(3), v in proptest::collection::vec(-3.0f64..3.0, 3)) {
        let metric = MetricMatrix::new(a).unwrap();
        let w = project_simplex_metric(&v, &metric).unwrap();
        let again = project_simplex_metric(w.as_slice(), &metric).unwrap();
        for (x, y) in w.as_slice().iter().zip(again.as_slice()) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }
}
