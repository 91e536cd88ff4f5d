use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{FeatureMap, PredictiveModel};
use crate::error::{Error, Result};
use crate::linalg::{dot, SquareMatrix};
use crate::math;

/// Conjugate posterior `N(μ, Σ)` of the weights of `y = φᵀθ + ε`,
/// `ε ~ N(0, σ_n²)`, starting from the prior `N(0, σ_θ² I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLinearPosterior {
    pub mean: Vec<f64>,
    pub covariance: SquareMatrix,
    pub noise_var: f64,
    pub prior_var: f64,
}

impl GaussianLinearPosterior {
    pub fn prior(dim: usize, prior_var: f64, noise_var: f64) -> Result<Self> {
        if !(prior_var > 0.0) || !(noise_var > 0.0) || !prior_var.is_finite() || !noise_var.is_finite() {
            return Err(Error::InvalidInput(format!(
                "prior_var {prior_var} and noise_var {noise_var} must be positive"
            )));
        }
        Ok(Self {
            mean: vec![0.0; dim],
            covariance: SquareMatrix::scaled_identity(dim, prior_var),
            noise_var,
            prior_var,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check_dim(&self, phi: &[f64]) -> Result<()> {
        if phi.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: phi.len(),
            });
        }
        Ok(())
    }

    /// Predictive mean and variance at `φ`, with an extra `q I` added to the
    /// weight covariance first.
    pub fn predictive_with_drift(&self, phi: &[f64], drift_var: f64) -> Result<(f64, f64)> {
        self.check_dim(phi)?;
        let mean = dot(phi, &self.mean);
        let param_var = self.covariance.quad_form(phi) + drift_var * dot(phi, phi);
        if !(param_var >= -1e-12 * (1.0 + self.covariance.max_abs())) || !param_var.is_finite() {
            return Err(Error::Numeric(format!("posterior covariance not PSD (φᵀΣφ = {param_var})")));
        }
        Ok((mean, param_var.max(0.0) + self.noise_var))
    }

    pub fn predictive(&self, phi: &[f64]) -> Result<(f64, f64)> {
        self.predictive_with_drift(phi, 0.0)
    }

    /// `log N(y; φᵀμ, φᵀΣφ + σ_n²)`.
    pub fn predict_log_density(&self, phi: &[f64], y: f64) -> Result<f64> {
        let (m, v) = self.predictive(phi)?;
        Ok(math::normal_log_pdf(y, m, v))
    }

    /// Rank-one conjugate update.
    pub fn observe(&mut self, phi: &[f64], y: f64) -> Result<()> {
        self.check_dim(phi)?;
        let s_phi = self.covariance.mul_vec(phi);
        let s = dot(phi, &s_phi) + self.noise_var;
        let resid = y - dot(phi, &self.mean);
        for (m, g) in self.mean.iter_mut().zip(&s_phi) {
            *m += g * resid / s;
        }
        self.covariance.add_outer(-1.0 / s, &s_phi);
        self.covariance.symmetrize();
        Ok(())
    }

    /// Random-walk time update `Σ ← Σ + q I`.
    pub fn diffuse(&mut self, drift_var: f64) {
        if drift_var > 0.0 {
            self.covariance.add_identity(drift_var);
        }
    }
}

/// Upper bound on `Σ_t ℓ_t − ℓ(φ_tᵀθ*; y_t)` for the conjugate model with
/// `‖φ_t‖ ≤ 1` over `t` steps: `‖θ*‖²/(2σ_θ²) + (F/2) log(1 + t c σ_θ²/F)`
/// with curvature `c = 1/σ_n²`.
pub fn kakade_ng_bound(theta_norm2: f64, prior_var: f64, noise_var: f64, dim: usize, t: usize) -> f64 {
    let f = dim as f64;
    let c = 1.0 / noise_var;
    theta_norm2 / (2.0 * prior_var) + 0.5 * f * math::ln_1p(t as f64 * c * prior_var / f)
}

/// Hyperparameters of a conjugate linear model.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LinearHyper {
    pub prior_var: f64,
    pub noise_var: f64,
}

/// Bayesian linear regression on a feature map, optionally with random-walk
/// drift `θ_t = θ_{t−1} + N(0, σ_rw² I)` on the weights (the dynamic RFF-GP).
///
/// The stored posterior is the filtered one; the time update is applied when
/// predicting and again, permanently, at the start of [`observe`](Self::observe).
#[derive(Debug, Clone, PartialEq)]
pub struct BayesLinearModel {
    pub features: FeatureMap,
    pub posterior: GaussianLinearPosterior,
    pub drift_var: f64,
}

impl BayesLinearModel {
    pub fn new(features: FeatureMap, hyper: LinearHyper, drift_var: f64) -> Result<Self> {
        if !(drift_var >= 0.0) || !drift_var.is_finite() {
            return Err(Error::InvalidInput(format!("drift variance {drift_var} must be non-negative")));
        }
        let posterior = GaussianLinearPosterior::prior(features.dim(), hyper.prior_var, hyper.noise_var)?;
        Ok(Self {
            features,
            posterior,
            drift_var,
        })
    }

    pub fn predictive(&self, x: &[f64]) -> Result<(f64, f64)> {
        let phi = self.features.apply(x)?;
        self.posterior.predictive_with_drift(&phi, self.drift_var)
    }
}

impl PredictiveModel for BayesLinearModel {
    fn predict_log_density(&self, x: &[f64], y: f64) -> Result<f64> {
        let (m, v) = self.predictive(x)?;
        Ok(math::normal_log_pdf(y, m, v))
    }

    fn observe(&mut self, x: &[f64], y: f64) -> Result<()> {
        let phi = self.features.apply(x)?;
        self.posterior.diffuse(self.drift_var);
        self.posterior.observe(&phi, y)
    }

    fn feature_dim(&self) -> usize {
        self.features.dim()
    }

    fn describe(&self) -> String {
        let kind = match &self.features {
            FeatureMap::Subset { indices, .. } => format!("linear{indices:?}"),
            FeatureMap::Rff(b) => format!("rff-gp(F={}, ℓ={})", b.n_features(), b.lengthscale),
        };
        format!(
            "{kind} σθ²={} σn²={} σrw²={}",
            self.posterior.prior_var, self.posterior.noise_var, self.drift_var
        )
    }
}
