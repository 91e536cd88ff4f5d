//! GARCH(1,1) with Gaussian innovations, filtered by sequential Monte Carlo.
//!
//! Each particle carries static parameters `(α₀, α₁, β)` and the conditional
//! variance `σ²` of the next observation. One step:
//!
//! 1. predictive `log Σ_i ρ_i N(y; 0, σ²_i)` (log-sum-exp),
//! 2. reweight `ρ_i ∝ ρ_i N(y; 0, σ²_i)`,
//! 3. propagate `σ²_i ← α₀ + α₁ y² + β σ²_i`,
//! 4. if `ESS < threshold · N`: systematic resampling, then random-walk
//!    Metropolis rejuvenation of `(α₀, α₁, β)`.
//!
//! The rejuvenation target is the prior times the likelihood of the most
//! recent `window` observations, with the variance recursion over the window
//! started at the window's mean square.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::PredictiveModel;
use crate::error::{Error, Result};
use crate::math;
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TruncatedNormal {
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
}

impl TruncatedNormal {
    pub fn new(mean: f64, sd: f64, lo: f64, hi: f64) -> Self {
        Self { mean, sd, lo, hi }
    }

    /// Unnormalized log-density; `-inf` outside `[lo, hi]`.
    fn log_kernel(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return f64::NEG_INFINITY;
        }
        let z = (x - self.mean) / self.sd;
        -0.5 * z * z
    }

    fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GarchParams {
    pub alpha0: f64,
    pub alpha1: f64,
    pub beta: f64,
}

impl GarchParams {
    pub fn is_stationary(&self) -> bool {
        self.alpha0 > 0.0 && self.alpha1 >= 0.0 && self.beta >= 0.0 && self.alpha1 + self.beta < 1.0
    }

    pub fn unconditional_var(&self) -> f64 {
        self.alpha0 / (1.0 - self.alpha1 - self.beta)
    }

    #[inline]
    pub fn next_var(&self, y: f64, var: f64) -> f64 {
        self.alpha0 + self.alpha1 * y * y + self.beta * var
    }
}

/// Truncated-Gaussian priors on `(α₀, α₁, β, σ₀)` restricted to the
/// stationary region `α₁ + β < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GarchPrior {
    pub alpha0: TruncatedNormal,
    pub alpha1: TruncatedNormal,
    pub beta: TruncatedNormal,
    /// Prior on the initial conditional standard deviation.
    pub sigma0: TruncatedNormal,
}

impl Default for GarchPrior {
    fn default() -> Self {
        Self {
            alpha0: TruncatedNormal::new(0.05, 0.1, 1e-6, 0.5),
            alpha1: TruncatedNormal::new(0.1, 0.1, 0.0, 0.5),
            beta: TruncatedNormal::new(0.8, 0.15, 0.0, 0.98),
            sigma0: TruncatedNormal::new(1.0, 0.5, 1e-3, 5.0),
        }
    }
}

const MAX_PRIOR_DRAWS: usize = 100_000;

impl GarchPrior {
    fn log_density(&self, p: &GarchParams) -> f64 {
        if !p.is_stationary() {
            return f64::NEG_INFINITY;
        }
        self.alpha0.log_kernel(p.alpha0) + self.alpha1.log_kernel(p.alpha1) + self.beta.log_kernel(p.beta)
    }

    fn draw_component(d: &TruncatedNormal, rng: &mut StreamRng) -> Result<f64> {
        for _ in 0..MAX_PRIOR_DRAWS {
            let x = rng.normal_with(d.mean, d.sd);
            if d.contains(x) {
                return Ok(x);
            }
        }
        Err(Error::InvalidInput(format!("truncated prior {d:?} has negligible mass")))
    }

    pub fn sample(&self, rng: &mut StreamRng) -> Result<GarchParticle> {
        for _ in 0..MAX_PRIOR_DRAWS {
            let params = GarchParams {
                alpha0: Self::draw_component(&self.alpha0, rng)?,
                alpha1: Self::draw_component(&self.alpha1, rng)?,
                beta: Self::draw_component(&self.beta, rng)?,
            };
            if params.is_stationary() {
                let s = Self::draw_component(&self.sigma0, rng)?;
                return Ok(GarchParticle { params, var: s * s });
            }
        }
        Err(Error::InvalidInput("GARCH prior has negligible stationary mass".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GarchParticle {
    pub params: GarchParams,
    /// Conditional variance of the next observation.
    pub var: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GarchParticleSet {
    pub particles: Vec<GarchParticle>,
    /// Normalized weights.
    pub weights: Vec<f64>,
}

impl GarchParticleSet {
    pub fn from_prior(prior: &GarchPrior, n: usize, rng: &mut StreamRng) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("particle set needs at least one particle".into()));
        }
        let particles = (0..n).map(|_| prior.sample(rng)).collect::<Result<Vec<_>>>()?;
        Ok(Self::equally_weighted(particles))
    }

    pub fn equally_weighted(particles: Vec<GarchParticle>) -> Self {
        let n = particles.len();
        Self {
            particles,
            weights: alloc::vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }
}

/// `log Σ_i ρ_i N(y; 0, σ²_i)`.
pub fn garch_predictive_log_density(pset: &GarchParticleSet, y: f64) -> f64 {
    let terms: Vec<f64> = pset
        .particles
        .iter()
        .zip(&pset.weights)
        .map(|(p, &w)| math::ln(w) + math::normal_log_pdf(y, 0.0, p.var))
        .collect();
    math::log_sum_exp(&terms)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GarchSmcConfig {
    pub n_particles: usize,
    /// Resample when `ESS < ess_fraction · N`.
    pub ess_fraction: f64,
    pub rejuvenation_steps: usize,
    pub window: usize,
    /// Random-walk proposal sd as a multiple of the particle spread.
    pub proposal_scale: f64,
    pub prior: GarchPrior,
}

impl Default for GarchSmcConfig {
    fn default() -> Self {
        Self {
            n_particles: 1000,
            ess_fraction: 0.5,
            rejuvenation_steps: 5,
            window: 50,
            proposal_scale: 0.5,
            prior: GarchPrior::default(),
        }
    }
}

/// Diagnostics of one filter step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmcStep {
    pub log_predictive: f64,
    pub ess: f64,
    pub resampled: bool,
    /// Every particle likelihood vanished; the filter restarted from the prior.
    pub degenerate: bool,
    pub accepted_moves: usize,
}

/// A GARCH(1,1) particle filter. The model ignores `x`.
#[derive(Debug, Clone)]
pub struct GarchSmc {
    pub config: GarchSmcConfig,
    pub particles: GarchParticleSet,
    rng: StreamRng,
    window: VecDeque<f64>,
    step: u64,
    pub degenerate_steps: Vec<u64>,
}

impl GarchSmc {
    pub fn new(config: GarchSmcConfig, seed: u64) -> Result<Self> {
        if !(config.ess_fraction > 0.0 && config.ess_fraction <= 1.0) {
            return Err(Error::InvalidInput(format!("ess_fraction {} not in (0, 1]", config.ess_fraction)));
        }
        let mut rng = StreamRng::new(seed);
        let particles = GarchParticleSet::from_prior(&config.prior, config.n_particles, &mut rng)?;
        Ok(Self::from_particles(config, particles, rng))
    }

    pub fn from_particles(config: GarchSmcConfig, particles: GarchParticleSet, rng: StreamRng) -> Self {
        Self {
            config,
            particles,
            rng,
            window: VecDeque::new(),
            step: 0,
            degenerate_steps: Vec::new(),
        }
    }

    pub fn step(&mut self, y: f64) -> Result<SmcStep> {
        if !y.is_finite() {
            return Err(Error::InvalidInput(format!("observation {y} is not finite")));
        }
        self.step += 1;
        if self.config.window > 0 {
            if self.window.len() == self.config.window {
                self.window.pop_front();
            }
            self.window.push_back(y);
        }
        let log_lik: Vec<f64> = self
            .particles
            .particles
            .iter()
            .map(|p| math::normal_log_pdf(y, 0.0, p.var))
            .collect();
        let log_w: Vec<f64> = self
            .particles
            .weights
            .iter()
            .zip(&log_lik)
            .map(|(w, l)| math::ln(*w) + l)
            .collect();
        let log_predictive = math::log_sum_exp(&log_w);
        if !log_predictive.is_finite() {
            self.degenerate_steps.push(self.step);
            self.particles =
                GarchParticleSet::from_prior(&self.config.prior, self.config.n_particles, &mut self.rng)?;
            return Ok(SmcStep {
                log_predictive,
                ess: self.particles.ess(),
                resampled: false,
                degenerate: true,
                accepted_moves: 0,
            });
        }
        for (w, lw) in self.particles.weights.iter_mut().zip(&log_w) {
            *w = math::exp(lw - log_predictive);
        }
        let total: f64 = self.particles.weights.iter().sum();
        self.particles.weights.iter_mut().for_each(|w| *w /= total);
        for p in &mut self.particles.particles {
            p.var = p.params.next_var(y, p.var);
        }
        let ess = self.particles.ess();
        let n = self.particles.len();
        let mut resampled = false;
        let mut accepted_moves = 0;
        if ess < self.config.ess_fraction * n as f64 {
            systematic_resample(&mut self.particles, &mut self.rng);
            resampled = true;
            accepted_moves = self.rejuvenate();
        }
        Ok(SmcStep {
            log_predictive,
            ess,
            resampled,
            degenerate: false,
            accepted_moves,
        })
    }

    fn window_log_target(&self, params: &GarchParams) -> (f64, f64) {
        let prior = self.config.prior.log_density(params);
        if prior == f64::NEG_INFINITY {
            return (prior, 0.0);
        }
        let n = self.window.len() as f64;
        let mut var = self.window.iter().map(|y| y * y).sum::<f64>() / n;
        if !(var > 0.0) {
            var = params.unconditional_var();
        }
        let mut ll = 0.0;
        for &y in &self.window {
            ll += math::normal_log_pdf(y, 0.0, var);
            var = params.next_var(y, var);
        }
        (prior + ll, var)
    }

    fn rejuvenate(&mut self) -> usize {
        if self.config.rejuvenation_steps == 0 || self.window.is_empty() {
            return 0;
        }
        let n = self.particles.len() as f64;
        let spread = |f: fn(&GarchParams) -> f64, ps: &[GarchParticle]| {
            let mean = ps.iter().map(|p| f(&p.params)).sum::<f64>() / n;
            let var = ps
                .iter()
                .map(|p| {
                    let d = f(&p.params) - mean;
                    d * d
                })
                .sum::<f64>()
                / n;
            math::sqrt(var).max(1e-4)
        };
        let ps = &self.particles.particles;
        let scale = self.config.proposal_scale;
        let sd = [
            scale * spread(|p| p.alpha0, ps),
            scale * spread(|p| p.alpha1, ps),
            scale * spread(|p| p.beta, ps),
        ];
        let mut accepted = 0;
        for i in 0..self.particles.len() {
            let mut current = self.particles.particles[i];
            let (mut current_target, _) = self.window_log_target(&current.params);
            for _ in 0..self.config.rejuvenation_steps {
                let proposal = GarchParams {
                    alpha0: current.params.alpha0 + sd[0] * self.rng.normal(),
                    alpha1: current.params.alpha1 + sd[1] * self.rng.normal(),
                    beta: current.params.beta + sd[2] * self.rng.normal(),
                };
                let (target, end_var) = self.window_log_target(&proposal);
                let u = self.rng.uniform_open_low();
                if target > f64::NEG_INFINITY && math::ln(u) < target - current_target {
                    current = GarchParticle {
                        params: proposal,
                        var: end_var,
                    };
                    current_target = target;
                    accepted += 1;
                }
            }
            self.particles.particles[i] = current;
        }
        accepted
    }
}

/// Systematic resampling with a single uniform offset; leaves equal weights.
fn systematic_resample(pset: &mut GarchParticleSet, rng: &mut StreamRng) {
    let n = pset.len();
    let u0 = rng.uniform() / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut cum = pset.weights[0];
    let mut j = 0;
    for i in 0..n {
        let u = u0 + i as f64 / n as f64;
        while u > cum && j + 1 < n {
            j += 1;
            cum += pset.weights[j];
        }
        out.push(pset.particles[j]);
    }
    *pset = GarchParticleSet::equally_weighted(out);
}

impl PredictiveModel for GarchSmc {
    fn predict_log_density(&self, _x: &[f64], y: f64) -> Result<f64> {
        Ok(garch_predictive_log_density(&self.particles, y))
    }

    fn observe(&mut self, _x: &[f64], y: f64) -> Result<()> {
        self.step(y).map(|_| ())
    }

    fn feature_dim(&self) -> usize {
        0
    }

    fn describe(&self) -> String {
        format!(
            "garch(1,1)-smc N={} ess={:.1}",
            self.particles.len(),
            self.particles.ess()
        )
    }
}
