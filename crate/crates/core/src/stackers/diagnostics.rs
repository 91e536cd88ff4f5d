//! Exact identities and bounds that hold on stacker traces, used as runtime
//! checks on experiment output.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::simplex::{DensityVector, SimplexWeights};

/// Largest acceptable `|LHS_k − RHS_k|` in [`telescoping_residuals`].
pub const TELESCOPING_TOLERANCE: f64 = 1e-8;

/// Result of the O-BMA telescoping identity check.
#[derive(Debug, Clone, PartialEq)]
pub struct TelescopingCheck {
    /// `LHS_k − RHS_k` per model, with
    /// `LHS_k = Σ_t log r_{t,k} − Σ_t log(w_t·r_t)` and
    /// `RHS_k = log(w_{T,k} / w_{0,k})`.
    /// Models whose weight underflowed to zero are excluded (`None`).
    pub residuals: Vec<Option<f64>>,
}

impl TelescopingCheck {
    pub fn max_abs(&self) -> f64 {
        self.residuals
            .iter()
            .flatten()
            .fold(0.0, |m: f64, r| m.max(r.abs()))
    }

    pub fn collapsed(&self) -> Vec<usize> {
        self.residuals
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_none())
            .map(|(k, _)| k)
            .collect()
    }

    pub fn holds(&self) -> bool {
        self.max_abs() <= TELESCOPING_TOLERANCE
    }
}

/// Evidence-gain identity of O-BMA: for every model `k`, the cumulative
/// log-density advantage over the mixture equals `log(w_{T,k} / w_{0,k})`.
///
/// `played[t]` are the weights that scored step `t`; `final_weights` are the
/// weights after the last update. Entries whose weight has fallen into the
/// subnormal range carry too few significant bits to compare and are reported
/// as collapsed.
pub fn telescoping_residuals(
    history: &[DensityVector],
    played: &[SimplexWeights],
    final_weights: &SimplexWeights,
    prior: &SimplexWeights,
) -> Result<TelescopingCheck> {
    let k = prior.len();
    if played.len() != history.len() {
        return Err(Error::ContractViolation(format!(
            "{} weight rows for {} density rows",
            played.len(),
            history.len()
        )));
    }
    if let Some(w0) = played.first() {
        if w0 != prior {
            return Err(Error::ContractViolation("trace does not start at the prior".into()));
        }
    }
    if final_weights.len() != k || history.iter().any(|r| r.len() != k) {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: final_weights.len(),
        });
    }
    let mut model_sums = alloc::vec![0.0; k];
    let mut mixture_sum = 0.0;
    for (r, w) in history.iter().zip(played) {
        mixture_sum += r.log_mixture(w);
        for (s, kk) in model_sums.iter_mut().zip(0..k) {
            *s += r.log_density(kk);
        }
    }
    let residuals = (0..k)
        .map(|kk| {
            let (wt, w0) = (final_weights.as_slice()[kk], prior.as_slice()[kk]);
            if wt < f64::MIN_POSITIVE || w0 < f64::MIN_POSITIVE {
                return None;
            }
            let lhs = model_sums[kk] - mixture_sum;
            let rhs = math::ln(wt) - math::ln(w0);
            Some(lhs - rhs)
        })
        .collect();
    Ok(TelescopingCheck { residuals })
}

/// Index of the model with the largest cumulative log-density, lowest index
/// on ties, with its cumulative log-density.
pub fn best_model(history: &[DensityVector]) -> Option<(usize, f64)> {
    let k = history.first()?.len();
    let sums: Vec<f64> = (0..k)
        .map(|kk| history.iter().map(|r| r.log_density(kk)).sum())
        .collect();
    let best = crate::simplex::argmax(&sums);
    Some((best, sums[best]))
}

/// Regret of a weight trace against the best single model:
/// `max_k Σ_t log r_{t,k} − Σ_t log(w_t·r_t)`. For O-BMA from uniform weights
/// this is at most `log K`.
pub fn obma_regret_to_best(history: &[DensityVector], played: &[SimplexWeights]) -> f64 {
    let Some((_, best)) = best_model(history) else {
        return 0.0;
    };
    let wealth: f64 = history.iter().zip(played).map(|(r, w)| r.log_mixture(w)).sum();
    best - wealth
}

/// Log-evidence of the stacking model with fixed weights: `Σ_t log(w·r_t)`.
pub fn stacking_evidence(history: &[DensityVector], w: &SimplexWeights) -> f64 {
    history.iter().map(|r| r.log_mixture(w)).sum()
}

/// `(Σ_k w_k log p_k(D), max_k log p_k(D))`: the weighted model evidence, a
/// Jensen lower bound on [`stacking_evidence`], and its upper bound by the
/// best single model.
pub fn bma_evidence_bound(history: &[DensityVector], w: &SimplexWeights) -> (f64, f64) {
    let k = w.len();
    let sums: Vec<f64> = (0..k)
        .map(|kk| history.iter().map(|r| r.log_density(kk)).sum())
        .collect();
    let lhs = w.as_slice().iter().zip(&sums).map(|(a, b)| if *a == 0.0 { 0.0 } else { a * b }).sum();
    let rhs = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lhs, if history.is_empty() { 0.0 } else { rhs })
}
