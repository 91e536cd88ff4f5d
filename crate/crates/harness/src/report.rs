//! On-disk formats: `trace.csv` per trial, `summary.json` per trial and an
//! `aggregate.csv` across trials.
//!
//! Floats are written with 17 significant digits so a trace replays exactly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stacking_core::simplex::{floor_densities, DensityVector, SimplexWeights, DEFAULT_DENSITY_FLOOR};

use crate::experiment::{ModelEvent, RunReport, TrialError};
use crate::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

/// Full-precision float formatting used in every CSV.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trace_header(k: usize, labels: &[&str]) -> Vec<String> {
    let mut h = Vec::with_capacity(1 + k + labels.len() * (k + 3));
    h.push("t".to_string());
    h.extend((1..=k).map(|i| format!("r_{i}")));
    for label in labels {
        h.extend((1..=k).map(|i| format!("{label}_w_{i}")));
        h.push(format!("{label}_log_ens"));
        h.push(format!("{label}_avg_pll"));
        h.push(format!("{label}_regret"));
    }
    h
}

pub fn write_trace<W: Write>(report: &RunReport, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    let labels: Vec<&str> = report.stackers.iter().map(|s| s.label.as_str()).collect();
    w.write_record(trace_header(report.k(), &labels))?;
    let mut row: Vec<String> = Vec::new();
    for (t, r) in report.history.iter().enumerate() {
        row.clear();
        row.push((t + 1).to_string());
        row.extend(r.log_densities().into_iter().map(|lp| fmt_f64(lp.exp())));
        for s in &report.stackers {
            row.extend(s.weights[t].as_slice().iter().map(|&v| fmt_f64(v)));
            row.push(fmt_f64(s.log_ens[t]));
            row.push(fmt_f64(s.avg_pll[t]));
            row.push(fmt_f64(s.regret[t]));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcrpSummary {
    pub weights: Vec<f64>,
    pub log_wealth: f64,
    pub gap: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSummary {
    /// `Σ_t log(w·r_t)` at the final weights.
    pub stacking: f64,
    /// `Σ_k w_k Σ_t log r_{t,k}` at the final weights.
    pub bma_lower: f64,
    /// `max_k Σ_t log r_{t,k}`.
    pub best_model: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackerSummary {
    pub label: String,
    pub algorithm: String,
    pub learning_rate: f64,
    pub final_weights: Vec<f64>,
    pub log_wealth: f64,
    pub avg_pll: f64,
    pub avg_pll_after_suppress: f64,
    pub regret: f64,
    pub collapse_steps: Vec<usize>,
    pub evidence: EvidenceSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub label: String,
    /// `log(w_T,k / w_0,k) − (Σ log r_{t,k} − Σ log(w_t·r_t))`; `null` for collapsed entries.
    pub residuals: Vec<Option<f64>>,
    pub max_abs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub schema_version: u32,
    pub scenario: String,
    pub trial: usize,
    pub seed: u64,
    pub steps: usize,
    pub k: usize,
    pub suppress: usize,
    pub models: Vec<String>,
    pub bcrp: BcrpSummary,
    pub stackers: Vec<StackerSummary>,
    pub identity_checks: Vec<IdentityCheck>,
    /// Smallest `min_k r_k / max_k r_k` over the stream.
    pub market_variability: f64,
    pub model_events: Vec<ModelEvent>,
}

/// Written instead of a summary when a trial aborts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub schema_version: u32,
    pub trial: usize,
    pub seed: u64,
    pub step: Option<usize>,
    pub source: String,
    pub error: String,
}

impl From<&TrialError> for TrialFailure {
    fn from(e: &TrialError) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            trial: e.trial,
            seed: e.seed,
            step: e.step,
            source: e.source_name.clone(),
            error: e.message.clone(),
        }
    }
}

pub fn summarize(report: &RunReport) -> TrialSummary {
    let stackers = report
        .stackers
        .iter()
        .map(|s| {
            let (bma_lower, best_model) = stacking_core::stackers::bma_evidence_bound(&report.history, &s.final_weights);
            StackerSummary {
                label: s.label.clone(),
                algorithm: s.config.algorithm.slug().to_string(),
                learning_rate: s.config.learning_rate,
                final_weights: s.final_weights.as_slice().to_vec(),
                log_wealth: s.log_wealth(),
                avg_pll: s.final_avg_pll(),
                avg_pll_after_suppress: s.avg_pll_after(report.suppress),
                regret: s.final_regret(),
                collapse_steps: s.collapse_steps.clone(),
                evidence: EvidenceSummary {
                    stacking: stacking_core::stackers::stacking_evidence(&report.history, &s.final_weights),
                    bma_lower,
                    best_model,
                },
            }
        })
        .collect();
    let identity_checks = report
        .identity_checks()
        .into_iter()
        .map(|(label, c)| IdentityCheck {
            label,
            max_abs: c.max_abs(),
            holds: c.holds(),
            residuals: c.residuals,
        })
        .collect();
    TrialSummary {
        schema_version: SCHEMA_VERSION,
        scenario: report.scenario.to_string(),
        trial: report.trial,
        seed: report.seed,
        steps: report.steps(),
        k: report.k(),
        suppress: report.suppress,
        models: report.model_names.clone(),
        bcrp: BcrpSummary {
            weights: report.bcrp.weights.as_slice().to_vec(),
            log_wealth: report.bcrp.log_wealth,
            gap: report.bcrp.gap,
            iterations: report.bcrp.iterations,
        },
        stackers,
        identity_checks,
        market_variability: report.market_variability(),
        model_events: report.model_events.clone(),
    }
}

pub fn trial_dir(out: &Path, trial: usize) -> PathBuf {
    out.join(format!("trial_{trial:03}"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes `trace.csv` and `summary.json` of one trial under `out/trial_XXX/`.
pub fn write_report(report: &RunReport, out: &Path) -> Result<PathBuf, HarnessError> {
    let dir = trial_dir(out, report.trial);
    fs::create_dir_all(&dir)?;
    let file = fs::File::create(dir.join("trace.csv"))?;
    write_trace(report, std::io::BufWriter::new(file))?;
    write_json(&dir.join("summary.json"), &summarize(report))?;
    Ok(dir)
}

pub fn write_failure(err: &TrialError, out: &Path) -> Result<PathBuf, HarnessError> {
    let dir = trial_dir(out, err.trial);
    fs::create_dir_all(&dir)?;
    write_json(&dir.join("error.json"), &TrialFailure::from(err))?;
    Ok(dir)
}

/// `p`-quantile by linear interpolation between order statistics.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Sample standard deviation; 0 for fewer than two values.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub label: String,
    pub trials: usize,
    pub median_pll: f64,
    pub p10_pll: f64,
    pub p90_pll: f64,
    pub median_regret: f64,
}

/// Median and 10th/90th percentiles of the post-suppression average PLL of
/// each stacker over the successful trials.
pub fn aggregate(reports: &[&RunReport]) -> Vec<AggregateRow> {
    let Some(first) = reports.first() else {
        return Vec::new();
    };
    first
        .stackers
        .iter()
        .map(|s| {
            let plls: Vec<f64> = reports
                .iter()
                .filter_map(|r| r.stacker(&s.label))
                .map(|t| t.avg_pll_after(first.suppress))
                .collect();
            let regrets: Vec<f64> = reports
                .iter()
                .filter_map(|r| r.stacker(&s.label))
                .map(|t| t.final_regret())
                .collect();
            AggregateRow {
                label: s.label.clone(),
                trials: plls.len(),
                median_pll: median(&plls),
                p10_pll: quantile(&plls, 0.1),
                p90_pll: quantile(&plls, 0.9),
                median_regret: median(&regrets),
            }
        })
        .collect()
}

pub fn write_aggregate(rows: &[AggregateRow], path: &Path) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["label", "trials", "median_pll", "p10_pll", "p90_pll", "median_regret"])?;
    for r in rows {
        w.write_record([
            r.label.clone(),
            r.trials.to_string(),
            fmt_f64(r.median_pll),
            fmt_f64(r.p10_pll),
            fmt_f64(r.p90_pll),
            fmt_f64(r.median_regret),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One stacker's columns read back from a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedStacker {
    pub label: String,
    pub weights: Vec<Vec<f64>>,
    pub log_ens: Vec<f64>,
    pub avg_pll: Vec<f64>,
    pub regret: Vec<f64>,
}

impl ParsedStacker {
    /// Algorithm slug: the label up to an `@` tag.
    pub fn slug(&self) -> &str {
        self.label.split('@').next().unwrap_or(&self.label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrace {
    pub t: Vec<usize>,
    /// Natural-scale densities as written.
    pub r: Vec<Vec<f64>>,
    pub stackers: Vec<ParsedStacker>,
}

impl ParsedTrace {
    pub fn k(&self) -> usize {
        self.r.first().map_or(0, |r| r.len())
    }

    /// Density history with the default floor applied.
    pub fn history(&self) -> Result<Vec<DensityVector>, HarnessError> {
        self.r
            .iter()
            .map(|row| floor_densities(row, DEFAULT_DENSITY_FLOOR).map_err(HarnessError::from))
            .collect()
    }

    pub fn weights_of(&self, s: &ParsedStacker) -> Result<Vec<SimplexWeights>, HarnessError> {
        s.weights
            .iter()
            .map(|w| SimplexWeights::new(w.clone()).map_err(HarnessError::from))
            .collect()
    }
}

fn bad_trace(msg: impl Into<String>) -> HarnessError {
    HarnessError::Trace(msg.into())
}

pub fn parse_trace<R: std::io::Read>(input: R) -> Result<ParsedTrace, HarnessError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("t") {
        return Err(bad_trace("first column must be `t`"));
    }
    let k = header[1..].iter().take_while(|h| h.starts_with("r_")).count();
    if k == 0 {
        return Err(bad_trace("no r_ columns"));
    }
    let rest = &header[1 + k..];
    if rest.len() % (k + 3) != 0 {
        return Err(bad_trace(format!("{} stacker columns is not a multiple of K + 3 = {}", rest.len(), k + 3)));
    }
    let labels: Vec<String> = rest
        .chunks(k + 3)
        .map(|c| {
            c[k].strip_suffix("_log_ens")
                .map(str::to_string)
                .ok_or_else(|| bad_trace(format!("expected a _log_ens column, found `{}`", c[k])))
        })
        .collect::<Result<_, _>>()?;
    let labels_ref: Vec<&str> = labels.iter().map(String::as_str).collect();
    if trace_header(k, &labels_ref) != header {
        return Err(bad_trace("header does not follow the trace layout"));
    }
    let mut trace = ParsedTrace {
        t: Vec::new(),
        r: Vec::new(),
        stackers: labels
            .into_iter()
            .map(|label| ParsedStacker {
                label,
                weights: Vec::new(),
                log_ens: Vec::new(),
                avg_pll: Vec::new(),
                regret: Vec::new(),
            })
            .collect(),
    };
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64, HarnessError> {
            rec[i]
                .parse::<f64>()
                .map_err(|_| bad_trace(format!("row {}: `{}` is not a number", line + 1, &rec[i])))
        };
        trace.t.push(
            rec[0]
                .parse()
                .map_err(|_| bad_trace(format!("row {}: bad step `{}`", line + 1, &rec[0])))?,
        );
        trace.r.push((1..=k).map(num).collect::<Result<_, _>>()?);
        for (j, s) in trace.stackers.iter_mut().enumerate() {
            let base = 1 + k + j * (k + 3);
            s.weights.push((base..base + k).map(num).collect::<Result<_, _>>()?);
            s.log_ens.push(num(base + k)?);
            s.avg_pll.push(num(base + k + 1)?);
            s.regret.push(num(base + k + 2)?);
        }
    }
    Ok(trace)
}

pub fn read_trace(path: &Path) -> Result<ParsedTrace, HarnessError> {
    let file = fs::File::open(path).map_err(|e| bad_trace(format!("cannot open {}: {e}", path.display())))?;
    parse_trace(std::io::BufReader::new(file))
}
