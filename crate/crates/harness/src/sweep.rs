//! Learning-rate sweep over EG's `η` and ONS's `β`.

use std::path::Path;

use serde::Serialize;
use stacking_core::simplex::SUM_TOLERANCE;
use stacking_core::stackers::Algorithm;

use crate::config::{ExperimentConfig, LabeledStacker, StackerSpec};
use crate::experiment::{run_stacker_sets, RunReport};
use crate::report::{fmt_f64, median, std_dev};
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub algorithm: String,
    /// Which hyperparameter the rate sets.
    pub parameter: String,
    pub rate: f64,
    pub median_pll: f64,
    pub std_pll: f64,
    pub trials_ok: usize,
    pub trials_failed: usize,
    /// Every recorded weight vector was finite and on the simplex.
    pub weights_valid: bool,
    pub error: Option<String>,
}

/// The stacker a sweep cell runs. EG sweeps its step size; ONS sweeps `β`,
/// the inverse scale of its Newton step.
pub fn cell_stacker(algorithm: &str, rate: f64) -> Result<(StackerSpec, &'static str), HarnessError> {
    let alg = Algorithm::from_slug(algorithm)
        .ok_or_else(|| HarnessError::Config(format!("unknown algorithm `{algorithm}`")))?;
    let mut spec = StackerSpec::new(alg);
    spec.label = Some(format!("{}@{rate:e}", alg.slug()));
    let parameter = match alg {
        Algorithm::Ons => {
            spec.ons_beta = Some(rate);
            "ons_beta"
        }
        Algorithm::Eg => {
            spec.learning_rate = Some(rate);
            "learning_rate"
        }
        other => return Err(HarnessError::Config(format!("no sweep parameter for {other}"))),
    };
    Ok((spec, parameter))
}

fn weights_valid(report: &RunReport) -> bool {
    report.stackers.iter().all(|s| {
        s.weights.iter().chain(std::iter::once(&s.final_weights)).all(|w| {
            let v = w.as_slice();
            v.iter().all(|x| x.is_finite() && *x >= 0.0) && (v.iter().sum::<f64>() - 1.0).abs() <= SUM_TOLERANCE
        }) && s.log_ens.iter().all(|x| x.is_finite())
    })
}

/// Runs every `(algorithm, rate)` cell over all trials of `config`. Trials
/// share their simulated densities across cells. A failing cell becomes a row
/// with `error` set.
pub fn sweep_learning_rates(
    config: &ExperimentConfig,
    algorithms: &[String],
    rates: &[f64],
) -> Result<Vec<SweepRow>, HarnessError> {
    let mut cells = Vec::new();
    for a in algorithms {
        for &rate in rates {
            let (spec, parameter) = cell_stacker(a, rate)?;
            let config = spec.to_config()?;
            // the hyperparameter checks do not depend on K beyond K ≥ 1
            config
                .validate(1)
                .map_err(|e| HarnessError::Config(format!("{a} at rate {rate}: {e}")))?;
            cells.push((a.clone(), parameter, rate, LabeledStacker {
                label: spec.label.clone().unwrap_or_default(),
                config,
            }));
        }
    }
    let sets: Vec<Vec<LabeledStacker>> = cells.iter().map(|c| vec![c.3.clone()]).collect();
    let results = run_stacker_sets(config, &sets);
    Ok(cells
        .iter()
        .enumerate()
        .map(|(j, (alg, parameter, rate, _))| {
            let mut plls = Vec::new();
            let mut errors = Vec::new();
            let mut valid = true;
            for trial in &results {
                match &trial[j] {
                    Ok(r) => {
                        valid &= weights_valid(r);
                        plls.push(r.stackers[0].avg_pll_after(config.suppress));
                    }
                    Err(e) => errors.push(e.to_string()),
                }
            }
            SweepRow {
                algorithm: alg.clone(),
                parameter: parameter.to_string(),
                rate: *rate,
                median_pll: median(&plls),
                std_pll: std_dev(&plls),
                trials_ok: plls.len(),
                trials_failed: errors.len(),
                weights_valid: valid && !plls.is_empty(),
                error: errors.into_iter().next(),
            }
        })
        .collect())
}

pub fn write_sweep(rows: &[SweepRow], path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "algorithm",
        "parameter",
        "rate",
        "median_pll",
        "std_pll",
        "trials_ok",
        "trials_failed",
        "weights_valid",
        "error",
    ])?;
    for r in rows {
        w.write_record([
            r.algorithm.clone(),
            r.parameter.clone(),
            fmt_f64(r.rate),
            fmt_f64(r.median_pll),
            fmt_f64(r.std_pll),
            r.trials_ok.to_string(),
            r.trials_failed.to_string(),
            r.weights_valid.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
