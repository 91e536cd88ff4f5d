//! Consistency checks replayed from an emitted trace.

use serde::Serialize;
use stacking_core::simplex::SUM_TOLERANCE;
use stacking_core::stackers::{obma_update, solve_bcrp, telescoping_residuals, StackerState, TELESCOPING_TOLERANCE};

use crate::report::ParsedTrace;
use crate::HarnessError;

/// Tolerance on recomputed per-step quantities.
pub const REPLAY_TOLERANCE: f64 = 1e-9;
/// Slack on the final regret: two independent BCRP solves, each certified to 1e-6.
pub const REGRET_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckItem {
    pub label: String,
    pub check: String,
    pub passed: bool,
    /// Largest violation found (0 when the check passes trivially).
    pub worst: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub steps: usize,
    pub k: usize,
    pub bcrp_log_wealth: f64,
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }
}

fn item(label: &str, check: &str, worst: f64, tol: f64, detail: String) -> CheckItem {
    CheckItem {
        label: label.to_string(),
        check: check.to_string(),
        passed: worst <= tol,
        worst,
        detail,
    }
}

/// Re-derives every column of the trace from `r` and the recorded weights:
/// simplex validity, `log(w·r)`, the running average, the final regret
/// against a fresh BCRP solve, and for O-BMA the telescoping identity.
pub fn check_trace(trace: &ParsedTrace) -> Result<CheckReport, HarnessError> {
    let history = trace.history()?;
    if history.is_empty() {
        return Err(HarnessError::Trace("trace has no rows".into()));
    }
    let bcrp = solve_bcrp(&history)?;
    let mut items = Vec::new();
    for (i, t) in trace.t.iter().enumerate() {
        if *t != i + 1 {
            return Err(HarnessError::Trace(format!("row {} has t = {t}", i + 1)));
        }
    }
    for s in &trace.stackers {
        let label = s.label.as_str();
        let sum_err = s
            .weights
            .iter()
            .map(|w| {
                if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    f64::INFINITY
                } else {
                    (w.iter().sum::<f64>() - 1.0).abs()
                }
            })
            .fold(0.0, f64::max);
        items.push(item(label, "simplex", sum_err, SUM_TOLERANCE, "max |Σw − 1|".into()));
        if sum_err > SUM_TOLERANCE {
            continue;
        }
        let weights = trace.weights_of(s)?;
        let mut worst_ens: f64 = 0.0;
        let mut worst_avg: f64 = 0.0;
        let mut cum = 0.0;
        for (t, (r, w)) in history.iter().zip(&weights).enumerate() {
            let le = r.log_mixture(w);
            worst_ens = worst_ens.max((le - s.log_ens[t]).abs() / (1.0 + le.abs()));
            cum += s.log_ens[t];
            let avg = cum / (t + 1) as f64;
            worst_avg = worst_avg.max((avg - s.avg_pll[t]).abs() / (1.0 + avg.abs()));
        }
        items.push(item(label, "log_ens", worst_ens, REPLAY_TOLERANCE, "relative error of log(w·r)".into()));
        items.push(item(label, "avg_pll", worst_avg, REPLAY_TOLERANCE, "relative error of the running mean".into()));
        let final_regret = *s.regret.last().unwrap_or(&0.0);
        let recomputed = bcrp.log_wealth - cum;
        items.push(item(
            label,
            "regret",
            (final_regret - recomputed).abs() / (1.0 + recomputed.abs()),
            REGRET_TOLERANCE,
            format!("reported {final_regret:.6e}, recomputed {recomputed:.6e}"),
        ));
        if s.slug() == "obma" {
            // w_T is one more O-BMA step from the last recorded row.
            let mut state = StackerState::new(weights[weights.len() - 1].clone());
            obma_update(&mut state, &history[history.len() - 1])?;
            let c = telescoping_residuals(&history, &weights, &state.weights, &weights[0])?;
            let collapsed = c.collapsed();
            items.push(item(
                label,
                "telescoping",
                c.max_abs(),
                TELESCOPING_TOLERANCE,
                format!("{} collapsed entries skipped", collapsed.len()),
            ));
        }
    }
    Ok(CheckReport {
        steps: history.len(),
        k: trace.k(),
        bcrp_log_wealth: bcrp.log_wealth,
        items,
    })
}
