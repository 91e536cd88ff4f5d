//! Best constantly rebalanced portfolio: `argmax_w Σ_t log(w·r_t)` over the
//! simplex, solved by pairwise Frank-Wolfe with exact line search.
//!
//! For a concave objective the Frank-Wolfe gap `max_k ∇_k f(w) − w·∇f(w)`
//! bounds `f(w*) − f(w)`, so a small gap certifies the returned log-wealth.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::math;
use crate::simplex::{DensityVector, SimplexWeights};

pub const BCRP_GAP_TOLERANCE: f64 = 1e-6;
pub const BCRP_MAX_ITER: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct BcrpSolution {
    pub weights: SimplexWeights,
    /// `Σ_t log(w*·r_t)` on the natural density scale.
    pub log_wealth: f64,
    /// Frank-Wolfe duality gap at `weights`.
    pub gap: f64,
    pub iterations: usize,
}

pub fn solve_bcrp(history: &[DensityVector]) -> Result<BcrpSolution> {
    let Some(first) = history.first() else {
        return Err(Error::InvalidInput("BCRP needs at least one step".into()));
    };
    let k = first.len();
    if let Some(bad) = history.iter().find(|r| r.len() != k) {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: bad.len(),
        });
    }
    let log_scale: f64 = history.iter().map(|r| r.log_scale()).sum();
    let rows: Vec<&[f64]> = history.iter().map(|r| r.values()).collect();

    // Start from the best single model; it is optimal whenever one model dominates.
    let mut cum = vec![0.0; k];
    for row in &rows {
        for (c, v) in cum.iter_mut().zip(row.iter()) {
            *c += math::ln(*v);
        }
    }
    let start = crate::simplex::argmax(&cum);
    let mut w = vec![0.0; k];
    w[start] = 1.0;
    let mut mix: Vec<f64> = rows.iter().map(|row| row[start]).collect();

    let mut grad = vec![0.0; k];
    let mut gap = f64::INFINITY;
    for iter in 0..BCRP_MAX_ITER {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (row, &m) in rows.iter().zip(&mix) {
            let inv = 1.0 / m;
            for (g, v) in grad.iter_mut().zip(row.iter()) {
                *g += v * inv;
            }
        }
        let wg = dot(&w, &grad);
        let toward = crate::simplex::argmax(&grad);
        gap = grad[toward] - wg;
        if gap <= BCRP_GAP_TOLERANCE {
            return finish(w, &rows, log_scale, gap, iter);
        }
        // away vertex: smallest gradient among the support
        let away = (0..k)
            .filter(|&i| w[i] > 0.0)
            .min_by(|&i, &j| grad[i].total_cmp(&grad[j]))
            .expect("support is never empty");
        if away == toward {
            return finish(w, &rows, log_scale, gap, iter);
        }
        let max_step = w[away];
        let dir: Vec<f64> = rows.iter().map(|row| row[toward] - row[away]).collect();
        let step = line_search(&mix, &dir, max_step);
        if step <= 0.0 {
            return finish(w, &rows, log_scale, gap, iter);
        }
        if step >= max_step {
            w[toward] += w[away];
            w[away] = 0.0;
        } else {
            w[toward] += step;
            w[away] -= step;
        }
        for ((m, d), row) in mix.iter_mut().zip(&dir).zip(&rows) {
            *m += step * d;
            // guard against cancellation drift in the running mixture
            if *m <= 0.0 {
                *m = dot(&w, row);
            }
        }
        if iter % 64 == 63 {
            for (m, row) in mix.iter_mut().zip(&rows) {
                *m = dot(&w, row);
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: BCRP_MAX_ITER,
        residual: gap,
    })
}

fn finish(w: Vec<f64>, rows: &[&[f64]], log_scale: f64, gap: f64, iterations: usize) -> Result<BcrpSolution> {
    let weights = SimplexWeights::from_unnormalized(w)?;
    let log_wealth = rows
        .iter()
        .map(|row| math::ln(dot(weights.as_slice(), row)))
        .sum::<f64>()
        + log_scale;
    Ok(BcrpSolution {
        weights,
        log_wealth,
        gap: gap.max(0.0),
        iterations,
    })
}

/// Maximizes `φ(s) = Σ_t log(m_t + s d_t)` over `[0, max_step]`. `φ` is
/// concave with `φ'(0) > 0`, so the maximizer is the root of `φ'` or the
/// boundary. Safeguarded Newton with bisection.
fn line_search(mix: &[f64], dir: &[f64], max_step: f64) -> f64 {
    let deriv = |s: f64| -> (f64, f64) {
        let mut d1 = 0.0;
        let mut d2 = 0.0;
        for (&m, &d) in mix.iter().zip(dir) {
            let q = d / (m + s * d);
            d1 += q;
            d2 -= q * q;
        }
        (d1, d2)
    };
    let (d_end, _) = deriv(max_step);
    if d_end >= 0.0 {
        return max_step;
    }
    let (mut lo, mut hi) = (0.0, max_step);
    let mut s = 0.5 * max_step;
    for _ in 0..100 {
        let (d1, d2) = deriv(s);
        if !d1.is_finite() {
            hi = s;
            s = 0.5 * (lo + hi);
            continue;
        }
        if d1 > 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let newton = s - d1 / d2;
        let next = if d2 < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - s).abs() <= 1e-15 * max_step.max(1e-300) || hi - lo <= 1e-16 {
            return next;
        }
        s = next;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::floor_densities;

    fn dv(p: &[f64]) -> DensityVector {
        floor_densities(p, 1e-300).unwrap()
    }

    #[test]
    fn symmetric_history_gives_uniform() {
        let hist: Vec<_> = (0..10)
            .map(|t| if t % 2 == 0 { dv(&[2.0, 0.5]) } else { dv(&[0.5, 2.0]) })
            .collect();
        let sol = solve_bcrp(&hist).unwrap();
        assert!((sol.weights.as_slice()[0] - 0.5).abs() < 1e-6);
        assert!(sol.gap <= BCRP_GAP_TOLERANCE);
    }

    #[test]
    fn dominant_model_is_a_vertex() {
        let hist: Vec<_> = (0..20).map(|t| dv(&[1.0 + t as f64, 0.5, 0.3])).collect();
        let sol = solve_bcrp(&hist).unwrap();
        assert_eq!(sol.weights.as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_history_is_rejected() {
        assert!(solve_bcrp(&[]).is_err());
    }
}
