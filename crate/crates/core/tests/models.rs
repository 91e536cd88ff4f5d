use stacking_core::datagen::{gen_garch_series, StreamRecord};
use stacking_core::math::{log_sum_exp, normal_log_pdf};
use stacking_core::models::*;
use stacking_core::rng::StreamRng;

/// Log-density of `N(mean, var)` written out directly.
fn gauss_log_pdf(y: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (y - mean).powi(2) / var)
}

fn random_stream(rng: &mut StreamRng, n: usize, d: usize, theta: &[f64], noise_sd: f64) -> Vec<StreamRecord> {
    (0..n)
        .map(|t| {
            let x: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            let y = x.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>() + noise_sd * rng.normal();
            StreamRecord { t, x, y }
        })
        .collect()
}

#[test]
fn linear_prior_predictive_example() {
    let post = GaussianLinearPosterior::prior(2, 1.0, 1.0).unwrap();
    let phi = [1.0, 0.0];
    let (m, v) = post.predictive(&phi).unwrap();
    assert_eq!((m, v), (0.0, 2.0));
    let lp = post.predict_log_density(&phi, 0.0).unwrap();
    assert!((lp - gauss_log_pdf(0.0, 0.0, 2.0)).abs() < 1e-14);
    assert!((lp - (-0.5 * (4.0 * std::f64::consts::PI).ln())).abs() < 1e-14);
}

#[test]
fn linear_predictive_integrates_to_one() {
    let mut rng = StreamRng::new(5);
    let theta = [0.4, -0.3, 0.2];
    let data = random_stream(&mut rng, 30, 3, &theta, 0.7);
    let mut post = GaussianLinearPosterior::prior(3, 2.0, 0.49).unwrap();
    for r in &data {
        post.observe(&r.x, r.y).unwrap();
    }
    let phi = [0.3, 0.1, -0.5];
    let (m, v) = post.predictive(&phi).unwrap();
    let sd = v.sqrt();
    let n = 20_000;
    let (lo, hi) = (m - 8.0 * sd, m + 8.0 * sd);
    let h = (hi - lo) / n as f64;
    let mut total = 0.0;
    for i in 0..=n {
        let y = lo + h * i as f64;
        let wgt = if i == 0 || i == n { 0.5 } else { 1.0 };
        total += wgt * post.predict_log_density(&phi, y).unwrap().exp();
    }
    assert!((total * h - 1.0).abs() < 1e-6);
}

#[test]
fn rank_one_update_matches_batch_posterior() {
    let mut rng = StreamRng::new(11);
    let theta = [1.0, -2.0];
    let data = random_stream(&mut rng, 40, 2, &theta, 0.5);
    let (pv, nv) = (3.0, 0.25);
    let mut post = GaussianLinearPosterior::prior(2, pv, nv).unwrap();
    for r in &data {
        post.observe(&r.x, r.y).unwrap();
    }
    // precision Λ = I/σ_θ² + ΦᵀΦ/σ_n², mean Λ⁻¹ Φᵀy/σ_n²
    let mut l = [[1.0 / pv, 0.0], [0.0, 1.0 / pv]];
    let mut b = [0.0, 0.0];
    for r in &data {
        for i in 0..2 {
            b[i] += r.x[i] * r.y / nv;
            for j in 0..2 {
                l[i][j] += r.x[i] * r.x[j] / nv;
            }
        }
    }
    let det = l[0][0] * l[1][1] - l[0][1] * l[1][0];
    let cov = [[l[1][1] / det, -l[0][1] / det], [-l[1][0] / det, l[0][0] / det]];
    let mean = [cov[0][0] * b[0] + cov[0][1] * b[1], cov[1][0] * b[0] + cov[1][1] * b[1]];
    for i in 0..2 {
        assert!((post.mean[i] - mean[i]).abs() < 1e-10);
        for j in 0..2 {
            assert!((post.covariance.get(i, j) - cov[i][j]).abs() < 1e-12);
        }
    }
}

/// Dense Kalman filter for `θ_t = θ_{t−1} + N(0, qI)`, `y = φᵀθ + N(0, σ²)`.
struct Kalman {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
    q: f64,
    noise: f64,
}

impl Kalman {
    fn prior_cov(&self) -> Vec<Vec<f64>> {
        let mut c = self.cov.clone();
        for (i, row) in c.iter_mut().enumerate() {
            row[i] += self.q;
        }
        c
    }

    fn predictive(&self, phi: &[f64]) -> (f64, f64) {
        let c = self.prior_cov();
        let m: f64 = phi.iter().zip(&self.mean).map(|(a, b)| a * b).sum();
        let mut v = self.noise;
        for i in 0..phi.len() {
            for j in 0..phi.len() {
                v += phi[i] * c[i][j] * phi[j];
            }
        }
        (m, v)
    }

    fn update(&mut self, phi: &[f64], y: f64) {
        let (m, s) = self.predictive(phi);
        let c = self.prior_cov();
        let n = phi.len();
        let gain: Vec<f64> = (0..n).map(|i| (0..n).map(|j| c[i][j] * phi[j]).sum::<f64>() / s).collect();
        for i in 0..n {
            self.mean[i] += gain[i] * (y - m);
        }
        self.cov = (0..n)
            .map(|i| (0..n).map(|j| c[i][j] - gain[i] * gain[j] * s).collect())
            .collect();
    }
}

#[test]
fn rff_drift_model_matches_dense_kalman_filter() {
    let mut rng = StreamRng::new(3);
    let basis = RffBasis::sample(2, 12, 0.8, RffBasis::UNIT_AMPLITUDE, &mut rng).unwrap();
    let features = FeatureMap::Rff(basis.clone());
    let hyper = LinearHyper {
        prior_var: 1.5,
        noise_var: 0.3,
    };
    let q = 1e-3;
    let mut model = BayesLinearModel::new(features, hyper, q).unwrap();
    let mut oracle = Kalman {
        mean: vec![0.0; 12],
        cov: (0..12).map(|i| (0..12).map(|j| if i == j { 1.5 } else { 0.0 }).collect()).collect(),
        q,
        noise: 0.3,
    };
    for t in 0..200 {
        let x = [rng.normal(), rng.normal()];
        let y = (x[0] + 0.01 * t as f64).sin() + 0.3 * rng.normal();
        let phi = basis.apply(&x);
        assert!(phi.iter().map(|v| v * v).sum::<f64>().sqrt() <= 1.0 + 1e-12);
        let (m, v) = oracle.predictive(&phi);
        let lp = model.predict_log_density(&x, y).unwrap();
        assert!((lp - gauss_log_pdf(y, m, v)).abs() < 1e-9, "step {t}");
        model.observe(&x, y).unwrap();
        oracle.update(&phi, y);
    }
    for (a, b) in model.posterior.mean.iter().zip(&oracle.mean) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn drift_free_rff_reduces_to_static_regression() {
    let mut rng = StreamRng::new(4);
    let basis = RffBasis::sample(1, 5, 1.0, RffBasis::UNIT_AMPLITUDE, &mut rng).unwrap();
    let hyper = LinearHyper {
        prior_var: 1.0,
        noise_var: 0.1,
    };
    let mut model = BayesLinearModel::new(FeatureMap::Rff(basis.clone()), hyper, 0.0).unwrap();
    let mut post = GaussianLinearPosterior::prior(5, 1.0, 0.1).unwrap();
    for _ in 0..50 {
        let x = [rng.normal()];
        let y = x[0].cos() + 0.3 * rng.normal();
        let phi = basis.apply(&x);
        assert_eq!(model.predict_log_density(&x, y).unwrap(), post.predict_log_density(&phi, y).unwrap());
        model.observe(&x, y).unwrap();
        post.observe(&phi, y).unwrap();
    }
}

#[test]
fn empirical_bayes_picks_the_best_grid_point() {
    let mut rng = StreamRng::new(9);
    let data = random_stream(&mut rng, 200, 2, &[0.8, -0.5], 0.3);
    let grid = vec![
        LinearHyper {
            prior_var: 1.0,
            noise_var: 5.0,
        },
        LinearHyper {
            prior_var: 1.0,
            noise_var: 0.09,
        },
    ];
    let build = |h: &LinearHyper| BayesLinearModel::new(FeatureMap::subset(vec![0, 1]), *h, 0.0);
    let fit = empirical_bayes_fit(&data, &grid, build).unwrap();
    let direct: Vec<f64> = grid
        .iter()
        .map(|h| prequential_log_score(&mut build(h).unwrap(), &data).unwrap())
        .collect();
    assert_eq!(fit.scores, direct);
    assert_eq!(fit.index, 1);
    assert_eq!(fit.score, direct[1]);

    // identical grid points tie; the first wins
    let tied = empirical_bayes_fit(&data, &[grid[1], grid[1]], build).unwrap();
    assert_eq!(tied.index, 0);
}

#[test]
fn prequential_score_is_sum_of_one_step_predictives() {
    let mut rng = StreamRng::new(1);
    let data = random_stream(&mut rng, 20, 1, &[1.0], 1.0);
    let mut post = GaussianLinearPosterior::prior(1, 1.0, 1.0).unwrap();
    let mut expected = 0.0;
    for r in &data {
        let (m, v) = post.predictive(&r.x).unwrap();
        expected += gauss_log_pdf(r.y, m, v);
        post.observe(&r.x, r.y).unwrap();
    }
    let hyper = LinearHyper {
        prior_var: 1.0,
        noise_var: 1.0,
    };
    let mut model = BayesLinearModel::new(FeatureMap::subset(vec![0]), hyper, 0.0).unwrap();
    let got = prequential_log_score(&mut model, &data).unwrap();
    assert!((got - expected).abs() < 1e-10);
}

#[test]
fn log_grid_endpoints() {
    let g = log_grid(1e-4, 1.0, 5);
    let expected = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];
    for (a, b) in g.iter().zip(&expected) {
        assert!((a / b - 1.0).abs() < 1e-12);
    }
}

#[test]
fn kakade_ng_bound_holds_on_every_prefix() {
    for seed in 0..5 {
        let mut rng = StreamRng::derived(seed, 77);
        let d = 4;
        let truth: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let (pv, nv): (f64, f64) = (1.0, 0.5);
        let data: Vec<(Vec<f64>, f64)> = (0..1000)
            .map(|_| {
                let raw: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
                let n = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
                let phi: Vec<f64> = raw.iter().map(|v| v / n).collect();
                let y = phi.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + nv.sqrt() * rng.normal();
                (phi, y)
            })
            .collect();
        for _ in 0..5 {
            let dir: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let radius = 3.0 * rng.uniform();
            let star: Vec<f64> = dir.iter().map(|v| radius * v / len).collect();
            let mut post = GaussianLinearPosterior::prior(d, pv, nv).unwrap();
            let mut gap = 0.0;
            for (t, (phi, y)) in data.iter().enumerate() {
                let bayes = -post.predict_log_density(phi, *y).unwrap();
                let mean_star: f64 = phi.iter().zip(&star).map(|(a, b)| a * b).sum();
                gap += bayes + gauss_log_pdf(*y, mean_star, nv);
                post.observe(phi, *y).unwrap();
                let bound = kakade_ng_bound(radius * radius, pv, nv, d, t + 1);
                assert!(gap <= bound + 1e-9, "seed {seed} t {t}: {gap} > {bound}");
            }
        }
    }
}

fn small_particle_set() -> GarchParticleSet {
    let params = [
        (0.1, 0.1, 0.8, 1.0),
        (0.05, 0.2, 0.7, 0.5),
        (0.2, 0.05, 0.6, 2.0),
        (0.01, 0.3, 0.65, 0.8),
    ];
    GarchParticleSet::equally_weighted(
        params
            .iter()
            .map(|&(alpha0, alpha1, beta, var)| GarchParticle {
                params: GarchParams { alpha0, alpha1, beta },
                var,
            })
            .collect(),
    )
}

#[test]
fn garch_filter_matches_direct_mixture_without_resampling() {
    let config = GarchSmcConfig {
        n_particles: 4,
        ess_fraction: 1e-9,
        ..GarchSmcConfig::default()
    };
    let pset = small_particle_set();
    let mut smc = GarchSmc::from_particles(config, pset.clone(), StreamRng::new(0));
    let mut w: Vec<f64> = vec![0.25; 4];
    let mut var: Vec<f64> = pset.particles.iter().map(|p| p.var).collect();
    for &y in &[0.3, -1.2, 0.05, 2.0, -0.4] {
        let terms: Vec<f64> = w.iter().zip(&var).map(|(wi, v)| wi.ln() + gauss_log_pdf(y, 0.0, *v)).collect();
        let mx = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let oracle = mx + terms.iter().map(|t| (t - mx).exp()).sum::<f64>().ln();
        let direct = garch_predictive_log_density(&smc.particles, y);
        assert!((direct - oracle).abs() < 1e-10);
        let step = smc.step(y).unwrap();
        assert!(!step.resampled);
        assert!((step.log_predictive - oracle).abs() < 1e-10);
        for i in 0..4 {
            w[i] = (terms[i] - oracle).exp();
            let p = &pset.particles[i].params;
            var[i] = p.alpha0 + p.alpha1 * y * y + p.beta * var[i];
        }
        for i in 0..4 {
            assert!((smc.particles.weights[i] - w[i]).abs() < 1e-12);
            assert!((smc.particles.particles[i].var - var[i]).abs() < 1e-12);
        }
    }
}

#[test]
fn garch_single_particle_example() {
    let p = GarchParticle {
        params: GarchParams {
            alpha0: 0.1,
            alpha1: 0.1,
            beta: 0.8,
        },
        var: 1.0,
    };
    let pset = GarchParticleSet::equally_weighted(vec![p]);
    let lp = garch_predictive_log_density(&pset, 0.0);
    assert!((lp - (-0.5 * (2.0 * std::f64::consts::PI).ln())).abs() < 1e-15);
    assert!((p.params.next_var(0.0, 1.0) - 0.9).abs() < 1e-15);
}

#[test]
fn garch_smc_is_reproducible_and_resamples() {
    let params = GarchParams {
        alpha0: 0.05,
        alpha1: 0.1,
        beta: 0.85,
    };
    let ys = gen_garch_series(&params, 300, 2).unwrap();
    let config = GarchSmcConfig {
        n_particles: 200,
        ..GarchSmcConfig::default()
    };
    let run = || {
        let mut smc = GarchSmc::new(config, 17).unwrap();
        let steps: Vec<SmcStep> = ys.iter().map(|&y| smc.step(y).unwrap()).collect();
        (steps, smc.particles)
    };
    let (a, pa) = run();
    let (b, pb) = run();
    assert_eq!(a, b);
    assert_eq!(pa, pb);
    assert!(a.iter().any(|s| s.resampled));
    assert!(a.iter().all(|s| s.log_predictive.is_finite() && !s.degenerate));
    for s in &a {
        assert!(s.ess >= 1.0 - 1e-9 && s.ess <= 200.0 + 1e-9);
    }
    assert!(pb.particles.iter().all(|p| p.params.is_stationary() && p.var > 0.0));
}

#[test]
fn garch_smc_beats_a_misspecified_constant_variance() {
    let params = GarchParams {
        alpha0: 0.05,
        alpha1: 0.15,
        beta: 0.8,
    };
    let ys = gen_garch_series(&params, 2000, 6).unwrap();
    let mut smc = GarchSmc::new(GarchSmcConfig::default(), 1).unwrap();
    let filt: f64 = ys.iter().map(|&y| smc.step(y).unwrap().log_predictive).sum();
    let v = params.unconditional_var();
    let flat: f64 = ys.iter().map(|&y| normal_log_pdf(y, 0.0, v)).sum();
    assert!(filt > flat, "{filt} vs {flat}");
}

#[test]
fn log_sum_exp_handles_extremes() {
    assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
    assert!((log_sum_exp(&[-1000.0, -1000.0]) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
}
