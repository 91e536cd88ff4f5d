//! Sequential ensemble-weighting algorithms.
//!
//! Every algorithm follows the same contract: the current played weights
//! `w_t` are used to score the step (`log(w_t·r_t)`), then the density vector
//! `r_t` updates the internal state. Second-order methods are written against
//! the loss `ℓ_t(w) = −log(w·r_t)`, with gradient `−r/(w·r)` and Hessian
//! `r rᵀ/(w·r)²`.

mod bcrp;
mod diagnostics;
mod update;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

pub use bcrp::{solve_bcrp, BcrpSolution, BCRP_GAP_TOLERANCE, BCRP_MAX_ITER};
pub use diagnostics::{
    best_model, bma_evidence_bound, obma_regret_to_best, stacking_evidence, telescoping_residuals,
    TelescopingCheck, TELESCOPING_TOLERANCE,
};
pub use update::{
    dma_update, dons_update, eg_update, hedge_step, hedge_update, obma_update, ons_update,
    smoothed_eg_update, softbayes_online_rate, softbayes_online_update, softbayes_update,
    COLLAPSE_THRESHOLD,
};

use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;
use crate::simplex::{DensityVector, SimplexWeights, DEFAULT_DENSITY_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Algorithm {
    /// Online Bayesian model averaging.
    Obma,
    /// O-BMA with exponential forgetting of the prior weights.
    Dma,
    /// Hedge on the losses `−log r_k`; `η = 1` is exactly O-BMA.
    Hedge,
    /// Exponentiated gradients.
    Eg,
    /// EG mixed with the uniform portfolio after each step.
    SmoothedEg,
    /// Soft-Bayes with a fixed learning rate.
    SoftBayes,
    /// Soft-Bayes with the anytime schedule `η_t = log K / (2Kt)`.
    SoftBayesOnline,
    /// Online Newton step for portfolio selection.
    Ons,
    /// Discounted online Newton step.
    Dons,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::Obma,
        Algorithm::Dma,
        Algorithm::Hedge,
        Algorithm::Eg,
        Algorithm::SmoothedEg,
        Algorithm::SoftBayes,
        Algorithm::SoftBayesOnline,
        Algorithm::Ons,
        Algorithm::Dons,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            Algorithm::Obma => "obma",
            Algorithm::Dma => "dma",
            Algorithm::Hedge => "hedge",
            Algorithm::Eg => "eg",
            Algorithm::SmoothedEg => "smoothed-eg",
            Algorithm::SoftBayes => "soft-bayes",
            Algorithm::SoftBayesOnline => "soft-bayes-online",
            Algorithm::Ons => "ons",
            Algorithm::Dons => "dons",
        }
    }

    pub fn from_slug(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.slug() == s)
    }

    /// Whether the algorithm optimizes the stacking objective (as opposed to
    /// the BMA-style baselines).
    pub fn is_stacking(self) -> bool {
        !matches!(self, Algorithm::Obma | Algorithm::Dma | Algorithm::Hedge)
    }
}

impl core::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.slug())
    }
}

/// Hyperparameters of one stacker. Fields irrelevant to the chosen algorithm
/// are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct StackerConfig {
    pub algorithm: Algorithm,
    /// η: EG, smoothed EG, Soft-Bayes and Hedge step size; ONS smoothing
    /// weight; D-ONS step-size divisor.
    pub learning_rate: f64,
    /// γ of DMA.
    pub dma_forget: f64,
    /// δ of ONS.
    pub ons_delta: f64,
    /// β of ONS.
    pub ons_beta: f64,
    /// γ of D-ONS.
    pub dons_forget: f64,
    /// Uniform mixing weight of smoothed EG.
    pub eg_smooth: f64,
    /// Starting weights; uniform when `None`.
    pub initial_weights: Option<SimplexWeights>,
    pub density_floor: f64,
}

impl StackerConfig {
    /// Published defaults for each algorithm.
    pub fn new(algorithm: Algorithm) -> Self {
        let learning_rate = match algorithm {
            Algorithm::Eg => 1e-2,
            Algorithm::SmoothedEg => 1e-3,
            Algorithm::Ons => 1e-2,
            Algorithm::Dons | Algorithm::Hedge => 1.0,
            Algorithm::SoftBayes => 0.1,
            Algorithm::Obma | Algorithm::Dma | Algorithm::SoftBayesOnline => 0.0,
        };
        Self {
            algorithm,
            learning_rate,
            dma_forget: 0.99,
            ons_delta: 0.8,
            ons_beta: 1e-2,
            dons_forget: 0.99,
            eg_smooth: 1e-2,
            initial_weights: None,
            density_floor: DEFAULT_DENSITY_FLOOR,
        }
    }

    pub fn with_learning_rate(mut self, eta: f64) -> Self {
        self.learning_rate = eta;
        self
    }

    pub fn with_initial_weights(mut self, w: SimplexWeights) -> Self {
        self.initial_weights = Some(w);
        self
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::InvalidInput(format!("{} {what} = {v}", self.algorithm)));
        if k == 0 {
            return Err(Error::InvalidInput("ensemble needs at least one model".into()));
        }
        if let Some(w) = &self.initial_weights {
            if w.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: w.len(),
                });
            }
        }
        if !(self.density_floor > 0.0) || !self.density_floor.is_finite() {
            return bad("density_floor", self.density_floor);
        }
        let eta = self.learning_rate;
        match self.algorithm {
            Algorithm::Obma | Algorithm::SoftBayesOnline => {}
            Algorithm::Dma if !(self.dma_forget > 0.0 && self.dma_forget <= 1.0) => {
                return bad("dma_forget", self.dma_forget)
            }
            Algorithm::Dma => {}
            Algorithm::Hedge | Algorithm::Eg if !(eta > 0.0 && eta.is_finite()) => {
                return bad("learning_rate", eta)
            }
            Algorithm::Hedge | Algorithm::Eg => {}
            Algorithm::SmoothedEg => {
                if !(eta > 0.0 && eta.is_finite()) {
                    return bad("learning_rate", eta);
                }
                if !(0.0..1.0).contains(&self.eg_smooth) {
                    return bad("eg_smooth", self.eg_smooth);
                }
            }
            Algorithm::SoftBayes if !(0.0..=1.0).contains(&eta) => return bad("learning_rate", eta),
            Algorithm::SoftBayes => {}
            Algorithm::Ons => {
                if !(self.ons_delta > 0.0 && self.ons_delta <= 1.0) {
                    return bad("ons_delta", self.ons_delta);
                }
                if !(self.ons_beta > 0.0 && self.ons_beta.is_finite()) {
                    return bad("ons_beta", self.ons_beta);
                }
                if !(0.0..1.0).contains(&eta) {
                    return bad("learning_rate", eta);
                }
            }
            Algorithm::Dons => {
                if !(eta > 0.0 && eta.is_finite()) {
                    return bad("learning_rate", eta);
                }
                if !(self.dons_forget > 0.0 && self.dons_forget < 1.0) {
                    return bad("dons_forget", self.dons_forget);
                }
            }
        }
        Ok(())
    }
}

/// Mutable state shared by all algorithms.
#[derive(Debug, Clone)]
pub struct StackerState {
    /// Internal iterate (for ONS, the unsmoothed projection).
    pub weights: SimplexWeights,
    /// Weights used to score the next step.
    pub played: SimplexWeights,
    /// Starting weights, the anchor of the Soft-Bayes anytime schedule.
    pub initial: SimplexWeights,
    /// Number of updates applied.
    pub step: u64,
    /// ONS accumulator `I + Σ r rᵀ/(w·r)²`.
    pub ons_a: SquareMatrix,
    /// ONS accumulator `(1 + 1/β) Σ r/(w·r)`.
    pub ons_b: Vec<f64>,
    /// D-ONS discounted curvature.
    pub dons_p: SquareMatrix,
    /// `Σ_t log(w_t·r_t)`.
    pub cum_log_wealth: f64,
    /// `Σ_t log r_{t,k}` per model.
    pub cum_log_density: Vec<f64>,
}

impl StackerState {
    pub fn new(initial: SimplexWeights) -> Self {
        let k = initial.len();
        Self {
            weights: initial.clone(),
            played: initial.clone(),
            initial,
            step: 0,
            ons_a: SquareMatrix::identity(k),
            ons_b: vec![0.0; k],
            dons_p: SquareMatrix::identity(k),
            cum_log_wealth: 0.0,
            cum_log_density: vec![0.0; k],
        }
    }

    pub fn uniform(k: usize) -> Self {
        Self::new(SimplexWeights::uniform(k))
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.weights.len()
    }
}

/// What one update produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// `log(w_t·r_t)` with the pre-update played weights.
    pub log_mixture: f64,
    /// Sum of the new weights before renormalization.
    pub raw_sum: f64,
    /// A weight crossed below [`COLLAPSE_THRESHOLD`] during this update.
    pub collapse: bool,
}

/// A configured stacker: configuration plus state, updated in stream order.
#[derive(Debug, Clone)]
pub struct Stacker {
    config: StackerConfig,
    state: StackerState,
}

impl Stacker {
    pub fn new(config: StackerConfig, k: usize) -> Result<Self> {
        config.validate(k)?;
        let initial = config
            .initial_weights
            .clone()
            .unwrap_or_else(|| SimplexWeights::uniform(k));
        Ok(Self {
            config,
            state: StackerState::new(initial),
        })
    }

    pub fn config(&self) -> &StackerConfig {
        &self.config
    }

    pub fn state(&self) -> &StackerState {
        &self.state
    }

    pub fn algorithm(&self) -> Algorithm {
        self.config.algorithm
    }

    /// Weights that will score the next observation.
    pub fn weights(&self) -> &SimplexWeights {
        &self.state.played
    }

    pub fn observe(&mut self, r: &DensityVector) -> Result<StepOutcome> {
        if r.len() != self.state.k() {
            return Err(Error::DimensionMismatch {
                expected: self.state.k(),
                got: r.len(),
            });
        }
        let refloored;
        let r = if r.values().iter().any(|&v| v < self.config.density_floor) {
            refloored = r.with_floor(self.config.density_floor);
            &refloored
        } else {
            r
        };
        let c = &self.config;
        let s = &mut self.state;
        match c.algorithm {
            Algorithm::Obma => obma_update(s, r),
            Algorithm::Dma => dma_update(s, r, c.dma_forget),
            Algorithm::Hedge => hedge_update(s, r, c.learning_rate),
            Algorithm::Eg => eg_update(s, r, c.learning_rate),
            Algorithm::SmoothedEg => smoothed_eg_update(s, r, c.learning_rate, c.eg_smooth),
            Algorithm::SoftBayes => softbayes_update(s, r, c.learning_rate),
            Algorithm::SoftBayesOnline => softbayes_online_update(s, r),
            Algorithm::Ons => ons_update(s, r, c.ons_delta, c.ons_beta, c.learning_rate),
            Algorithm::Dons => dons_update(s, r, c.learning_rate, c.dons_forget),
        }
    }
}
