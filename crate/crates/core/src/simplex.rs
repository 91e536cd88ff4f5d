//! Simplex-constrained weights, per-model density vectors and projections
//! onto the probability simplex.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{dot, SquareMatrix};
use crate::math;

/// Tolerance on `|Σw − 1|` accepted when constructing [`SimplexWeights`].
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Default density floor, just above the smallest positive normal double.
pub const DEFAULT_DENSITY_FLOOR: f64 = 1e-300;

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "Vec<f64>", into = "Vec<f64>"))]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    /// Validates `values` as a simplex point and renormalizes away rounding drift.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("simplex needs at least one entry".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "simplex entries must be finite and non-negative: {values:?}"
            )));
        }
        let s: f64 = values.iter().sum();
        if (s - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidInput(format!("simplex entries sum to {s}")));
        }
        let mut w = Self(values);
        w.renormalize();
        Ok(w)
    }

    /// Normalizes a non-negative vector with positive total mass.
    pub fn from_unnormalized(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "cannot normalize {values:?} onto the simplex"
            )));
        }
        let s: f64 = values.iter().sum();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::Numeric(format!("total mass {s} cannot be normalized")));
        }
        for v in &mut values {
            *v /= s;
        }
        Ok(Self(values))
    }

    pub fn uniform(k: usize) -> Self {
        assert!(k >= 1, "simplex needs at least one entry");
        Self(vec![1.0 / k as f64; k])
    }

    pub fn vertex(k: usize, i: usize) -> Self {
        assert!(i < k);
        let mut v = vec![0.0; k];
        v[i] = 1.0;
        Self(v)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Lowest index among the largest entries.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn total_variation(&self, other: &SimplexWeights) -> f64 {
        0.5 * self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }

    /// `(1 − mix) w + mix / K`
    pub fn mixed_with_uniform(&self, mix: f64) -> Self {
        let k = self.len() as f64;
        let mut w = Self(self.0.iter().map(|v| (1.0 - mix) * v + mix / k).collect());
        w.renormalize();
        w
    }

    fn renormalize(&mut self) {
        let s: f64 = self.0.iter().sum();
        if s > 0.0 && s != 1.0 {
            for v in &mut self.0 {
                *v /= s;
            }
        }
    }
}

impl TryFrom<Vec<f64>> for SimplexWeights {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SimplexWeights> for Vec<f64> {
    fn from(w: SimplexWeights) -> Self {
        w.0
    }
}

/// One-step predictive densities of `K` models, stored as strictly positive
/// values times a common scale `exp(log_scale)`.
///
/// Every update rule only needs the ratios `r_k / (w·r)` and `log(w·r)`, so
/// the scale is carried separately and the values are kept near 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityVector {
    values: Vec<f64>,
    log_scale: f64,
    floored: bool,
}

impl DensityVector {
    /// Densities on their natural scale, each raised to at least `floor`.
    pub fn from_densities(p: &[f64], floor: f64) -> Result<Self> {
        floor_densities(p, floor)
    }

    /// Densities given as log-values. The largest log-density is factored into
    /// the scale, the remaining values are exponentiated and floored.
    pub fn from_log_densities(log_p: &[f64], floor: f64) -> Result<Self> {
        check_floor(floor)?;
        if log_p.is_empty() {
            return Err(Error::InvalidInput("empty density vector".into()));
        }
        if log_p.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::InvalidInput(format!("invalid log-densities {log_p:?}")));
        }
        let max = log_p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_scale = if max.is_finite() { max } else { 0.0 };
        let mut floored = false;
        let values = log_p
            .iter()
            .map(|&lp| {
                let v = math::exp(lp - log_scale);
                if v < floor {
                    floored = true;
                    floor
                } else {
                    v
                }
            })
            .collect();
        Ok(Self {
            values,
            log_scale,
            floored,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Scaled values; true densities are `values()[k] * exp(log_scale())`.
    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    /// Whether any entry was raised to the floor.
    #[inline]
    pub fn floored(&self) -> bool {
        self.floored
    }

    /// Copy with every scaled value raised to at least `floor`.
    pub fn with_floor(&self, floor: f64) -> Self {
        let mut floored = self.floored;
        let values = self
            .values
            .iter()
            .map(|&v| {
                if v < floor {
                    floored = true;
                    floor
                } else {
                    v
                }
            })
            .collect();
        Self {
            values,
            log_scale: self.log_scale,
            floored,
        }
    }

    /// `log r_k` on the natural scale.
    pub fn log_density(&self, k: usize) -> f64 {
        math::ln(self.values[k]) + self.log_scale
    }

    pub fn log_densities(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.log_density(k)).collect()
    }

    /// `r / (w·r)`, which is independent of the scale.
    pub fn relative_to(&self, w: &[f64]) -> Result<(Vec<f64>, f64)> {
        let wr = dot(w, &self.values);
        if !(wr > 0.0) || !wr.is_finite() {
            return Err(Error::Numeric(format!("ensemble density w·r = {wr}")));
        }
        Ok((self.values.iter().map(|r| r / wr).collect(), wr))
    }

    /// `log(w·r)` on the natural scale.
    pub fn log_mixture(&self, w: &SimplexWeights) -> f64 {
        math::ln(dot(w.as_slice(), &self.values)) + self.log_scale
    }

    /// Market variability `min r / max r` of this step.
    pub fn variability(&self) -> f64 {
        let min = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = self.values.iter().copied().fold(0.0, f64::max);
        min / max
    }
}

fn check_floor(floor: f64) -> Result<()> {
    if !(floor > 0.0) || !floor.is_finite() {
        return Err(Error::InvalidInput(format!("density floor must be positive, got {floor}")));
    }
    Ok(())
}

/// Raises every density to at least `floor`.
pub fn floor_densities(p: &[f64], floor: f64) -> Result<DensityVector> {
    check_floor(floor)?;
    if p.is_empty() {
        return Err(Error::InvalidInput("empty density vector".into()));
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidInput(format!("densities must be finite and non-negative: {p:?}")));
    }
    let mut floored = false;
    let values = p
        .iter()
        .map(|&v| {
            if v < floor {
                floored = true;
                floor
            } else {
                v
            }
        })
        .collect();
    Ok(DensityVector {
        values,
        log_scale: 0.0,
        floored,
    })
}

/// Symmetric positive-definite matrix defining a quadratic metric.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricMatrix(SquareMatrix);

impl MetricMatrix {
    pub fn new(m: SquareMatrix) -> Result<Self> {
        let scale = m.max_abs().max(1.0);
        if !m.is_finite() || m.symmetry_defect() > 1e-9 * scale {
            return Err(Error::InvalidMetric);
        }
        m.cholesky()?;
        Ok(Self(m))
    }

    pub fn identity(k: usize) -> Self {
        Self(SquareMatrix::identity(k))
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.0
    }

    pub fn into_inner(self) -> SquareMatrix {
        self.0
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Euclidean projection onto the simplex by sorting and thresholding.
pub fn project_simplex_euclidean(v: &[f64]) -> Result<SimplexWeights> {
    if v.is_empty() {
        return Err(Error::InvalidInput("cannot project an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite projection input {v:?}")));
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cum += u;
        let t = (cum - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    let w: Vec<f64> = v.iter().map(|x| (x - theta).max(0.0)).collect();
    SimplexWeights::from_unnormalized(w)
}

/// Tolerance on the scale-free KKT residual of [`project_simplex_metric`].
pub const METRIC_PROJECTION_TOLERANCE: f64 = 1e-8;
/// Iteration cap of [`project_simplex_metric`].
pub const METRIC_PROJECTION_MAX_ITER: usize = 10_000;

/// `argmin_{w ∈ simplex} (w − v)ᵀ A (w − v)`.
///
/// Solved by a primal active-set method warm-started at the Euclidean
/// projection. Each iteration solves the equality-constrained problem on the
/// free coordinates exactly, so the number of iterations is bounded by a
/// small multiple of `K` regardless of the conditioning of `A`.
pub fn project_simplex_metric(v: &[f64], metric: &MetricMatrix) -> Result<SimplexWeights> {
    let a = metric.matrix();
    let k = v.len();
    if a.dim() != k {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: k,
        });
    }
    let mut w = project_simplex_euclidean(v)?.into_vec();
    if k == 1 {
        return SimplexWeights::new(w);
    }
    // The minimizer is invariant to scaling A; normalize so tolerances are scale-free.
    let scale = (0..k).map(|i| a.get(i, i)).fold(0.0, f64::max);
    let mut a = a.clone();
    a.scale(1.0 / scale);

    let av = a.mul_vec(v);
    let mut active: Vec<bool> = w.iter().map(|&x| x == 0.0).collect();
    let mut converged = false;
    for _ in 0..METRIC_PROJECTION_MAX_ITER {
        let free: Vec<usize> = (0..k).filter(|&i| !active[i]).collect();
        let (target, mu) = face_minimizer(&a, &free, &av)?;
        // Move toward the face minimizer, stopping at the first bound hit.
        let mut alpha = 1.0;
        let mut blocking = None;
        for (j, &i) in free.iter().enumerate() {
            let d = target[j] - w[i];
            if target[j] < 0.0 && d < 0.0 {
                let ratio = w[i] / -d;
                if ratio < alpha {
                    alpha = ratio;
                    blocking = Some(i);
                }
            }
        }
        for (j, &i) in free.iter().enumerate() {
            w[i] = (w[i] + alpha * (target[j] - w[i])).max(0.0);
        }
        if let Some(i) = blocking {
            w[i] = 0.0;
            active[i] = true;
            continue;
        }
        // At the face minimizer: release the most negative bound multiplier λ_i = g_i + μ.
        let grad = metric_gradient(&a, &w, v);
        let tol = 1e-12 * (1.0 + grad.iter().fold(0.0, |m: f64, x| m.max(x.abs())));
        let mut worst: Option<(usize, f64)> = None;
        for i in (0..k).filter(|&i| active[i]) {
            let lambda = grad[i] + mu;
            if lambda < -tol && worst.map_or(true, |(_, l)| lambda < l) {
                worst = Some((i, lambda));
            }
        }
        match worst {
            Some((i, _)) => active[i] = false,
            None => {
                converged = true;
                break;
            }
        }
    }
    let residual = metric_kkt_residual(&a, &w, v);
    if !converged || residual > METRIC_PROJECTION_TOLERANCE {
        return Err(Error::NoConvergence {
            iterations: METRIC_PROJECTION_MAX_ITER,
            residual,
        });
    }
    SimplexWeights::from_unnormalized(w)
}

fn metric_gradient(a: &SquareMatrix, w: &[f64], v: &[f64]) -> Vec<f64> {
    let d: Vec<f64> = w.iter().zip(v).map(|(x, y)| x - y).collect();
    a.mul_vec(&d)
}

/// Minimizer of the projection objective on the face `{w_i = 0, i ∉ free; Σw = 1}`,
/// returned on the free coordinates together with the sum-constraint multiplier.
fn face_minimizer(a: &SquareMatrix, free: &[usize], av: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = free.len();
    let mut sub = SquareMatrix::zeros(n);
    for (r, &i) in free.iter().enumerate() {
        for (c, &j) in free.iter().enumerate() {
            sub.set(r, c, a.get(i, j));
        }
    }
    let chol = sub.cholesky()?;
    let rhs: Vec<f64> = free.iter().map(|&i| av[i]).collect();
    let hv = chol.solve(&rhs);
    let h1 = chol.solve(&vec![1.0; n]);
    let mu = (hv.iter().sum::<f64>() - 1.0) / h1.iter().sum::<f64>();
    let target = hv.iter().zip(&h1).map(|(x, y)| x - mu * y).collect();
    Ok((target, mu))
}

/// KKT residual of the projection problem: every coordinate in the support
/// must attain the minimum gradient entry. Assumes `A` already normalized.
fn metric_kkt_residual(a: &SquareMatrix, w: &[f64], v: &[f64]) -> f64 {
    let g = metric_gradient(a, w, v);
    let gmin = g.iter().copied().fold(f64::INFINITY, f64::min);
    let stationarity = w
        .iter()
        .zip(&g)
        .filter(|(x, _)| **x > 0.0)
        .map(|(_, gi)| gi - gmin)
        .fold(0.0, f64::max);
    let feasibility = (w.iter().sum::<f64>() - 1.0).abs();
    stationarity.max(feasibility)
}

/// Scale-free KKT residual of `w` as a solution of the metric projection of `v`.
pub fn metric_projection_residual(w: &SimplexWeights, v: &[f64], metric: &MetricMatrix) -> f64 {
    let a = metric.matrix();
    let scale = (0..a.dim()).map(|i| a.get(i, i)).fold(0.0, f64::max);
    let mut a = a.clone();
    a.scale(1.0 / scale);
    metric_kkt_residual(&a, w.as_slice(), v)
}
