//! Seeded synthetic streams. Every generator is a pure function of its
//! arguments and seed; see [`crate::rng`] for the exact random stream.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::models::GarchParams;
use crate::rng::StreamRng;
use crate::simplex::{floor_densities, DensityVector, DEFAULT_DENSITY_FLOOR};

/// One observation of a stream.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StreamRecord {
    pub t: usize,
    pub x: Vec<f64>,
    pub y: f64,
}

/// Gaussian linear data with weak predictors:
/// `x ~ N(input_mean·1, I)`, `y = xᵀθ + N(0, noise_var)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SubsetRegressionSpec {
    pub dim: usize,
    pub input_mean: f64,
    pub noise_var: f64,
    /// `Var(xᵀθ) / noise_var`, which equals `‖θ‖² / noise_var` for identity input covariance.
    pub snr: f64,
    pub n_pretrain: usize,
    pub n_stream: usize,
    pub seed: u64,
}

impl Default for SubsetRegressionSpec {
    fn default() -> Self {
        Self {
            dim: 15,
            input_mean: 5.0,
            noise_var: 1.0,
            snr: 0.8,
            n_pretrain: 1000,
            n_stream: 5000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetRegressionData {
    pub pretrain: Vec<StreamRecord>,
    pub stream: Vec<StreamRecord>,
    pub theta: Vec<f64>,
}

/// Draws `θ` as absolute standard normals rescaled to `‖θ‖² = snr·noise_var`,
/// then `n_pretrain + n_stream` records; `t` runs continuously across the split.
///
/// Random stream order: `dim` normals for `θ`, then per record `dim` normals
/// for `x` followed by one normal for the noise.
pub fn gen_subset_regression(spec: &SubsetRegressionSpec) -> Result<SubsetRegressionData> {
    if spec.dim == 0 || !(spec.snr > 0.0) || !(spec.noise_var > 0.0) {
        return Err(Error::InvalidInput("subset regression needs dim ≥ 1, snr > 0, noise_var > 0".into()));
    }
    let mut rng = StreamRng::new(spec.seed);
    let mut theta: Vec<f64> = (0..spec.dim).map(|_| rng.normal().abs()).collect();
    let norm2: f64 = theta.iter().map(|v| v * v).sum();
    let target = spec.snr * spec.noise_var;
    let c = math::sqrt(target / norm2);
    theta.iter_mut().for_each(|v| *v *= c);

    let noise_sd = math::sqrt(spec.noise_var);
    let total = spec.n_pretrain + spec.n_stream;
    let mut records: Vec<StreamRecord> = (0..total)
        .map(|t| {
            let x: Vec<f64> = (0..spec.dim).map(|_| spec.input_mean + rng.normal()).collect();
            let mean: f64 = x.iter().zip(&theta).map(|(a, b)| a * b).sum();
            let y = mean + noise_sd * rng.normal();
            StreamRecord { t, x, y }
        })
        .collect();
    let stream = records.split_off(spec.n_pretrain);
    Ok(SubsetRegressionData {
        pretrain: records,
        stream,
        theta,
    })
}

/// Model `k` regresses on coordinate `k` only.
pub fn build_open_bank(theta: &[f64]) -> Vec<Vec<usize>> {
    (0..theta.len()).map(|k| vec![k]).collect()
}

/// Model `k` regresses on the first `k + 1` coordinates; the last model
/// contains the data-generating process.
pub fn build_closed_bank(theta: &[f64]) -> Vec<Vec<usize>> {
    (0..theta.len()).map(|k| (0..=k).collect()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftStream {
    pub records: Vec<StreamRecord>,
    /// Index of the first record of every segment after the first.
    pub boundaries: Vec<usize>,
    /// Generating coefficients of each segment.
    pub thetas: Vec<Vec<f64>>,
}

/// Noise standard deviation of [`gen_drift_stream`].
pub const DRIFT_NOISE_SD: f64 = 0.5;

/// Piecewise-stationary linear data: `x ~ N(0, I_d)`,
/// `y = xᵀθ_s + N(0, 0.25)`, with `θ_s ~ N(0, I/d)` redrawn at the start of
/// every segment.
///
/// Random stream order: per segment, `d` normals for `θ_s`, then per record
/// `d` normals for `x` and one for the noise.
pub fn gen_drift_stream(n_segments: usize, segment_length: usize, d: usize, seed: u64) -> Result<DriftStream> {
    if n_segments == 0 || segment_length == 0 || d == 0 {
        return Err(Error::InvalidInput("drift stream needs positive segment count, length and dimension".into()));
    }
    let mut rng = StreamRng::new(seed);
    let scale = 1.0 / math::sqrt(d as f64);
    let mut records = Vec::with_capacity(n_segments * segment_length);
    let mut thetas = Vec::with_capacity(n_segments);
    let mut boundaries = Vec::with_capacity(n_segments - 1);
    for s in 0..n_segments {
        let theta: Vec<f64> = (0..d).map(|_| scale * rng.normal()).collect();
        if s > 0 {
            boundaries.push(records.len());
        }
        for _ in 0..segment_length {
            let x: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            let mean: f64 = x.iter().zip(&theta).map(|(a, b)| a * b).sum();
            let y = mean + DRIFT_NOISE_SD * rng.normal();
            records.push(StreamRecord {
                t: records.len(),
                x,
                y,
            });
        }
        thetas.push(theta);
    }
    Ok(DriftStream {
        records,
        boundaries,
        thetas,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum DensityRegime {
    /// `log r_{t,k} = μ_k + z_{t,k}` with per-stream offsets `μ_k ~ N(0, 0.5²)`
    /// and i.i.d. standard normal `z`.
    IidLognormal,
    /// Model 0 always has twice the largest density of the others.
    SingleDominant,
    /// Model `t mod K` has density 2, all others 0.5.
    AlternatingDominant,
    /// i.i.d. lognormal, but each entry is zero with probability 0.05 and
    /// lands on the density floor.
    NearZeroOutlier,
}

/// Synthetic per-model density streams for exercising stackers alone.
///
/// Random stream order: for the lognormal regimes, `K` normals for the
/// offsets, then per step per model one normal (and for the outlier regime
/// one uniform after it); for single-dominant, `K − 1` normals per step.
pub fn gen_density_stream(k: usize, t: usize, regime: DensityRegime, seed: u64) -> Result<Vec<DensityVector>> {
    if k == 0 {
        return Err(Error::InvalidInput("density stream needs K ≥ 1".into()));
    }
    let mut rng = StreamRng::new(seed);
    let offsets: Vec<f64> = match regime {
        DensityRegime::IidLognormal | DensityRegime::NearZeroOutlier => (0..k).map(|_| 0.5 * rng.normal()).collect(),
        _ => vec![0.0; k],
    };
    (0..t)
        .map(|step| {
            let p: Vec<f64> = match regime {
                DensityRegime::IidLognormal => offsets.iter().map(|mu| math::exp(mu + rng.normal())).collect(),
                DensityRegime::NearZeroOutlier => offsets
                    .iter()
                    .map(|mu| {
                        let v = math::exp(mu + rng.normal());
                        if rng.uniform() < 0.05 {
                            0.0
                        } else {
                            v
                        }
                    })
                    .collect(),
                DensityRegime::SingleDominant => {
                    let others: Vec<f64> = (1..k).map(|_| math::exp(rng.normal())).collect();
                    let lead = if others.is_empty() {
                        1.0
                    } else {
                        2.0 * others.iter().copied().fold(0.0, f64::max)
                    };
                    core::iter::once(lead).chain(others).collect()
                }
                DensityRegime::AlternatingDominant => {
                    (0..k).map(|j| if j == step % k { 2.0 } else { 0.5 }).collect()
                }
            };
            floor_densities(&p, DEFAULT_DENSITY_FLOOR)
        })
        .collect()
}

/// Simulates `y_t = σ_t ε_t`, `σ²_{t+1} = α₀ + α₁ y_t² + β σ²_t`, started at
/// the unconditional variance. One normal per step.
pub fn gen_garch_series(params: &GarchParams, t: usize, seed: u64) -> Result<Vec<f64>> {
    if !params.is_stationary() {
        return Err(Error::InvalidInput("GARCH parameters must be stationary".into()));
    }
    let mut rng = StreamRng::new(seed);
    let mut var = params.unconditional_var();
    Ok((0..t)
        .map(|_| {
            let y = math::sqrt(var) * rng.normal();
            var = params.next_var(y, var);
            y
        })
        .collect())
}
