//! Bayesian predictive models behind one sequential contract: score a
//! candidate `y` for input `x` with the current posterior predictive, then
//! condition on the observed pair.

mod empirical_bayes;
mod features;
mod garch;
mod linear;

use alloc::boxed::Box;
use alloc::string::String;

pub use empirical_bayes::{empirical_bayes_fit, log_grid, prequential_log_score, EmpiricalBayesFit};
pub use features::{FeatureMap, RffBasis};
pub use garch::{
    garch_predictive_log_density, GarchParams, GarchParticle, GarchParticleSet, GarchPrior, GarchSmc,
    GarchSmcConfig, SmcStep, TruncatedNormal,
};
pub use linear::{kakade_ng_bound, BayesLinearModel, GaussianLinearPosterior, LinearHyper};

use crate::error::Result;

pub trait PredictiveModel {
    /// `log p(y | x, D)` under the current posterior predictive.
    fn predict_log_density(&self, x: &[f64], y: f64) -> Result<f64>;

    /// Conditions the posterior on `(x, y)`.
    fn observe(&mut self, x: &[f64], y: f64) -> Result<()>;

    /// Dimension of the model's feature or parameter space.
    fn feature_dim(&self) -> usize;

    /// Short human-readable description of the model and its state.
    fn describe(&self) -> String;
}

impl<M: PredictiveModel + ?Sized> PredictiveModel for Box<M> {
    fn predict_log_density(&self, x: &[f64], y: f64) -> Result<f64> {
        (**self).predict_log_density(x, y)
    }

    fn observe(&mut self, x: &[f64], y: f64) -> Result<()> {
        (**self).observe(x, y)
    }

    fn feature_dim(&self) -> usize {
        (**self).feature_dim()
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}
