use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::math;
use crate::rng::StreamRng;

/// Random Fourier features for a squared-exponential kernel:
/// `φ(x) = a √(2/F) cos(Ω x + b)` with `Ω_ij ~ N(0, 1/ℓ²)`, `b_i ~ U(0, 2π)`.
/// `‖φ(x)‖ ≤ a √2` for every `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct RffBasis {
    /// `F × d`, row-major.
    frequencies: Vec<f64>,
    phases: Vec<f64>,
    input_dim: usize,
    pub lengthscale: f64,
    pub amplitude: f64,
}

impl RffBasis {
    /// Amplitude that bounds `‖φ(x)‖` by one.
    pub const UNIT_AMPLITUDE: f64 = core::f64::consts::FRAC_1_SQRT_2;

    pub fn sample(input_dim: usize, n_features: usize, lengthscale: f64, amplitude: f64, rng: &mut StreamRng) -> Result<Self> {
        if input_dim == 0 || n_features == 0 || !(lengthscale > 0.0) || !(amplitude > 0.0) {
            return Err(Error::InvalidInput("RFF basis needs positive dimensions and scales".into()));
        }
        let frequencies = (0..n_features * input_dim)
            .map(|_| rng.normal() / lengthscale)
            .collect();
        let phases = (0..n_features)
            .map(|_| core::f64::consts::TAU * rng.uniform())
            .collect();
        Ok(Self {
            frequencies,
            phases,
            input_dim,
            lengthscale,
            amplitude,
        })
    }

    pub fn n_features(&self) -> usize {
        self.phases.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let f = self.n_features();
        let c = self.amplitude * math::sqrt(2.0 / f as f64);
        (0..f)
            .map(|i| {
                let row = &self.frequencies[i * self.input_dim..(i + 1) * self.input_dim];
                let z: f64 = row.iter().zip(x).map(|(w, xi)| w * xi).sum();
                c * math::cos(z + self.phases[i])
            })
            .collect()
    }
}

/// Maps raw inputs to regression features.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap {
    /// Selected input coordinates times a fixed scale.
    Subset { indices: Vec<usize>, scale: f64 },
    Rff(RffBasis),
}

impl FeatureMap {
    pub fn subset(indices: Vec<usize>) -> Self {
        FeatureMap::Subset { indices, scale: 1.0 }
    }

    pub fn dim(&self) -> usize {
        match self {
            FeatureMap::Subset { indices, .. } => indices.len(),
            FeatureMap::Rff(b) => b.n_features(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            FeatureMap::Subset { indices, scale } => indices
                .iter()
                .map(|&i| {
                    x.get(i).map(|v| v * scale).ok_or(Error::DimensionMismatch {
                        expected: i + 1,
                        got: x.len(),
                    })
                })
                .collect(),
            FeatureMap::Rff(b) => {
                if x.len() != b.input_dim() {
                    return Err(Error::DimensionMismatch {
                        expected: b.input_dim(),
                        got: x.len(),
                    });
                }
                Ok(b.apply(x))
            }
        }
    }

    /// Rescales a subset map so that `‖φ(x)‖ ≤ 1` over `inputs`. RFF maps are
    /// bounded by construction and returned unchanged.
    pub fn normalized_on<'a>(self, inputs: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        match self {
            FeatureMap::Subset { indices, .. } => {
                let raw = FeatureMap::subset(indices.clone());
                let mut max_norm: f64 = 0.0;
                for x in inputs {
                    max_norm = max_norm.max(norm2(&raw.apply(x)?));
                }
                let scale = if max_norm > 0.0 { 1.0 / max_norm } else { 1.0 };
                Ok(FeatureMap::Subset { indices, scale })
            }
            rff => Ok(rff),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_amplitude_bounds_feature_norm() {
        let mut rng = StreamRng::new(11);
        let b = RffBasis::sample(3, 50, 0.7, RffBasis::UNIT_AMPLITUDE, &mut rng).unwrap();
        for _ in 0..500 {
            let x: Vec<f64> = (0..3).map(|_| 3.0 * rng.normal()).collect();
            assert!(norm2(&b.apply(&x)) <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn subset_normalization_caps_norm() {
        let xs = [alloc::vec![1.0, 2.0, 3.0], alloc::vec![-4.0, 0.0, 1.0]];
        let m = FeatureMap::subset(alloc::vec![0, 2])
            .normalized_on(xs.iter().map(|x| x.as_slice()))
            .unwrap();
        let worst = xs
            .iter()
            .map(|x| norm2(&m.apply(x).unwrap()))
            .fold(0.0, f64::max);
        assert!((worst - 1.0).abs() < 1e-12);
    }
}
