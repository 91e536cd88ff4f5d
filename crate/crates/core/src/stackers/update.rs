use alloc::format;
use alloc::vec::Vec;

use super::{StackerState, StepOutcome};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::math;
use crate::simplex::{project_simplex_metric, DensityVector, MetricMatrix, SimplexWeights};

/// O-BMA and DMA weights below this value are reported as collapsed.
pub const COLLAPSE_THRESHOLD: f64 = 1e-280;

/// Scores the step with the played weights and accumulates log-densities.
fn score(state: &mut StackerState, r: &DensityVector) -> f64 {
    let log_mix = r.log_mixture(&state.played);
    state.cum_log_wealth += log_mix;
    for (k, acc) in state.cum_log_density.iter_mut().enumerate() {
        *acc += r.log_density(k);
    }
    log_mix
}

fn check_len(state: &StackerState, r: &DensityVector) -> Result<()> {
    if r.len() != state.k() {
        return Err(Error::DimensionMismatch {
            expected: state.k(),
            got: r.len(),
        });
    }
    Ok(())
}

fn newly_collapsed(old: &SimplexWeights, new: &[f64]) -> bool {
    old.as_slice()
        .iter()
        .zip(new)
        .any(|(&o, &n)| o >= COLLAPSE_THRESHOLD && n < COLLAPSE_THRESHOLD)
}

/// Normalizes `raw` and installs it as both internal and played weights.
fn commit(state: &mut StackerState, raw: Vec<f64>, log_mix: f64, collapse: bool) -> Result<StepOutcome> {
    let raw_sum: f64 = raw.iter().sum();
    let w = SimplexWeights::from_unnormalized(raw)?;
    state.weights = w.clone();
    state.played = w;
    state.step += 1;
    Ok(StepOutcome {
        log_mixture: log_mix,
        raw_sum,
        collapse,
    })
}

/// Multiplicative reweighting `w'_k ∝ w_k^γ r_k`, shared by O-BMA (`γ = 1`) and DMA.
fn bayes_reweight(state: &mut StackerState, r: &DensityVector, forget: f64) -> Result<StepOutcome> {
    check_len(state, r)?;
    let raw: Vec<f64> = state
        .weights
        .as_slice()
        .iter()
        .zip(r.values())
        .map(|(&w, &rk)| if forget == 1.0 { w * rk } else { math::powf(w, forget) * rk })
        .collect();
    if raw.iter().all(|&v| v == 0.0) {
        return Err(Error::NumericCollapse {
            step: state.step + 1,
        });
    }
    let collapse = newly_collapsed(&state.weights, &SimplexWeights::from_unnormalized(raw.clone())?.into_vec());
    let log_mix = score(state, r);
    commit(state, raw, log_mix, collapse)
}

/// O-BMA: `w'_k = w_k r_k / Σ_j w_j r_j`.
pub fn obma_update(state: &mut StackerState, r: &DensityVector) -> Result<StepOutcome> {
    bayes_reweight(state, r, 1.0)
}

/// DMA: `w'_k ∝ w_k^γ r_k`.
pub fn dma_update(state: &mut StackerState, r: &DensityVector, forget: f64) -> Result<StepOutcome> {
    bayes_reweight(state, r, forget)
}

/// One Hedge step on the losses `−log r_k`: `w' ∝ w ⊙ exp(η log r)`.
pub fn hedge_step(w: &SimplexWeights, r: &DensityVector, eta: f64) -> Result<SimplexWeights> {
    // log r_k up to the common scale, which cancels in the normalization
    let max = r.values().iter().copied().fold(0.0, f64::max);
    let raw: Vec<f64> = w
        .as_slice()
        .iter()
        .zip(r.values())
        .map(|(&wk, &rk)| wk * math::exp(eta * math::ln(rk / max)))
        .collect();
    SimplexWeights::from_unnormalized(raw)
}

pub fn hedge_update(state: &mut StackerState, r: &DensityVector, eta: f64) -> Result<StepOutcome> {
    check_len(state, r)?;
    let next = hedge_step(&state.weights, r, eta)?;
    let collapse = newly_collapsed(&state.weights, next.as_slice());
    let log_mix = score(state, r);
    commit(state, next.into_vec(), log_mix, collapse)
}

fn eg_weights(w: &SimplexWeights, r: &DensityVector, eta: f64) -> Result<Vec<f64>> {
    let (g, _) = r.relative_to(w.as_slice())?;
    let gmax = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = w
        .as_slice()
        .iter()
        .zip(&g)
        .map(|(&wk, &gk)| wk * math::exp(eta * (gk - gmax)))
        .collect();
    if raw.iter().any(|v| !v.is_finite()) || raw.iter().all(|&v| v == 0.0) {
        return Err(Error::Numeric(format!(
            "exponentiated gradient overflow: η = {eta}, max r/(w·r) = {gmax}"
        )));
    }
    Ok(raw)
}

/// Exponentiated gradients: `w' ∝ w ⊙ exp(η r/(w·r))`.
pub fn eg_update(state: &mut StackerState, r: &DensityVector, eta: f64) -> Result<StepOutcome> {
    check_len(state, r)?;
    let raw = eg_weights(&state.weights, r, eta)?;
    let log_mix = score(state, r);
    commit(state, raw, log_mix, false)
}

/// EG followed by `w' ← (1 − δ) w' + δ/K`.
pub fn smoothed_eg_update(
    state: &mut StackerState,
    r: &DensityVector,
    eta: f64,
    smooth: f64,
) -> Result<StepOutcome> {
    check_len(state, r)?;
    let raw = eg_weights(&state.weights, r, eta)?;
    let mixed = SimplexWeights::from_unnormalized(raw)?.mixed_with_uniform(smooth);
    let log_mix = score(state, r);
    commit(state, mixed.into_vec(), log_mix, false)
}

/// Soft-Bayes: `w'_k = w_k (1 − η + η r_k/(w·r))`. The new weights sum to one
/// analytically; the computed sum is reported in [`StepOutcome::raw_sum`].
pub fn softbayes_update(state: &mut StackerState, r: &DensityVector, eta: f64) -> Result<StepOutcome> {
    check_len(state, r)?;
    let (g, _) = r.relative_to(state.weights.as_slice())?;
    let raw: Vec<f64> = state
        .weights
        .as_slice()
        .iter()
        .zip(&g)
        .map(|(&wk, &gk)| wk * (1.0 - eta + eta * gk))
        .collect();
    let log_mix = score(state, r);
    commit(state, raw, log_mix, false)
}

/// `η_t = log K / (2Kt)`.
pub fn softbayes_online_rate(k: usize, t: u64) -> f64 {
    math::ln(k as f64) / (2.0 * k as f64 * t as f64)
}

/// Soft-Bayes with the anytime schedule, pulled back towards the initial
/// weights by `1 − η_{t+1}/η_t = 1/(t+1)`.
pub fn softbayes_online_update(state: &mut StackerState, r: &DensityVector) -> Result<StepOutcome> {
    check_len(state, r)?;
    let k = state.k();
    if k == 1 {
        let log_mix = score(state, r);
        let w = state.weights.as_slice().to_vec();
        return commit(state, w, log_mix, false);
    }
    let t = state.step + 1;
    let eta = softbayes_online_rate(k, t);
    let ratio = t as f64 / (t + 1) as f64;
    let (g, _) = r.relative_to(state.weights.as_slice())?;
    let raw: Vec<f64> = state
        .weights
        .as_slice()
        .iter()
        .zip(&g)
        .zip(state.initial.as_slice())
        .map(|((&wk, &gk), &w0)| wk * (1.0 - eta + eta * gk) * ratio + (1.0 - ratio) * w0)
        .collect();
    let log_mix = score(state, r);
    commit(state, raw, log_mix, false)
}

/// Online Newton step for portfolios.
///
/// The gradient is evaluated at the played (smoothed) weights:
/// `A ← A + g gᵀ`, `b ← b + (1 + 1/β) g` with `g = r/(w̃·r)`, then
/// `w = Π_A(δ A⁻¹ b)` and `w̃ = (1 − η) w + η/K`.
pub fn ons_update(
    state: &mut StackerState,
    r: &DensityVector,
    delta: f64,
    beta: f64,
    eta: f64,
) -> Result<StepOutcome> {
    check_len(state, r)?;
    let k = state.k();
    let (g, _) = r.relative_to(state.played.as_slice())?;
    let mut a = state.ons_a.clone();
    a.add_outer(1.0, &g);
    a.symmetrize();
    let mut b = state.ons_b.clone();
    for (bi, gi) in b.iter_mut().zip(&g) {
        *bi += (1.0 + 1.0 / beta) * gi;
    }
    let weights = if k == 1 {
        SimplexWeights::uniform(1)
    } else {
        let chol = a.cholesky().map_err(|_| Error::Numeric("ONS matrix A is singular".into()))?;
        let v: Vec<f64> = chol.solve(&b).into_iter().map(|x| delta * x).collect();
        project_simplex_metric(&v, &MetricMatrix::new(a.clone())?)?
    };
    let played = weights.mixed_with_uniform(eta);
    let log_mix = score(state, r);
    state.ons_a = a;
    state.ons_b = b;
    state.weights = weights;
    let raw_sum = played.as_slice().iter().sum();
    state.played = played;
    state.step += 1;
    Ok(StepOutcome {
        log_mixture: log_mix,
        raw_sum,
        collapse: false,
    })
}

/// Discounted online Newton step:
/// `P ← (1 − γ) I + γ P + g gᵀ`, `w' = Π_P(w + (1/η) P⁻¹ g)` with `g = r/(w·r)`
/// (the negative loss gradient).
pub fn dons_update(state: &mut StackerState, r: &DensityVector, eta: f64, forget: f64) -> Result<StepOutcome> {
    check_len(state, r)?;
    let k = state.k();
    let (g, _) = r.relative_to(state.weights.as_slice())?;
    let mut p = state.dons_p.clone();
    p.scale(forget);
    p.add_identity(1.0 - forget);
    p.add_outer(1.0, &g);
    p.symmetrize();
    if !p.is_finite() {
        // w·r underflowed while a zero-weight model still had mass.
        return Err(Error::Numeric("D-ONS accumulator P overflowed".into()));
    }
    let weights = if k == 1 {
        SimplexWeights::uniform(1)
    } else {
        let chol = p.cholesky().map_err(|_| Error::Numeric("D-ONS matrix P is singular".into()))?;
        let dir = chol.solve(&g);
        let v: Vec<f64> = state
            .weights
            .as_slice()
            .iter()
            .zip(&dir)
            .map(|(w, d)| w + d / eta)
            .collect();
        project_simplex_metric(&v, &MetricMatrix::new(p.clone())?)?
    };
    let log_mix = score(state, r);
    state.dons_p = p;
    let raw_sum = dot(weights.as_slice(), &alloc::vec![1.0; k]);
    state.weights = weights.clone();
    state.played = weights;
    state.step += 1;
    Ok(StepOutcome {
        log_mixture: log_mix,
        raw_sum,
        collapse: false,
    })
}
