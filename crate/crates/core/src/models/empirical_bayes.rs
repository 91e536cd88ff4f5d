//! Type-II maximum likelihood over a finite hyperparameter grid, scored by
//! the prequential log-likelihood `Σ_i log p(y_i | y_{1:i−1}, ψ)`.

use alloc::vec::Vec;

use super::PredictiveModel;
use crate::datagen::StreamRecord;
use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalBayesFit<H> {
    pub index: usize,
    pub hyper: H,
    pub score: f64,
    /// Score of every grid point, in grid order (`-inf` for failed fits).
    pub scores: Vec<f64>,
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return alloc::vec![lo];
    }
    let (a, b) = (math::ln(lo), math::ln(hi));
    (0..n)
        .map(|i| math::exp(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

/// Sum of one-step-ahead log predictive densities over `data`, conditioning
/// the model on each record after scoring it.
pub fn prequential_log_score<M: PredictiveModel>(model: &mut M, data: &[StreamRecord]) -> Result<f64> {
    let mut total = 0.0;
    for rec in data {
        total += model.predict_log_density(&rec.x, rec.y)?;
        model.observe(&rec.x, rec.y)?;
    }
    Ok(total)
}

/// Returns the grid point with the highest prequential log score on `data`,
/// lowest index on ties. Grid points whose model fails to build or score get
/// `-inf`.
pub fn empirical_bayes_fit<H, M, F>(data: &[StreamRecord], grid: &[H], build: F) -> Result<EmpiricalBayesFit<H>>
where
    H: Clone,
    M: PredictiveModel,
    F: Fn(&H) -> Result<M>,
{
    if data.is_empty() || grid.is_empty() {
        return Err(Error::InvalidInput("empirical Bayes needs data and a non-empty grid".into()));
    }
    let scores: Vec<f64> = grid
        .iter()
        .map(|h| {
            build(h)
                .and_then(|mut m| prequential_log_score(&mut m, data))
                .ok()
                .filter(|s| !s.is_nan())
                .unwrap_or(f64::NEG_INFINITY)
        })
        .collect();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    if scores[best] == f64::NEG_INFINITY {
        return Err(Error::Numeric("every hyperparameter candidate scored -inf".into()));
    }
    Ok(EmpiricalBayesFit {
        index: best,
        hyper: grid[best].clone(),
        score: scores[best],
        scores,
    })
}
