//! Experiment configuration, read from TOML.
//!
//! ```toml
//! scenario = "open"
//! n_trials = 10
//! seed = 0            # trial i uses seed + i unless `seeds` is given
//! suppress = 100
//!
//! [data]              # scenario-specific; every key optional
//! n_stream = 5000
//!
//! [[stackers]]
//! algorithm = "eg"
//! learning_rate = 0.01
//!
//! [[stackers]]
//! algorithm = "ons"
//! label = "ons-fast"
//! ons_beta = 1.0
//! ```
//!
//! Unknown keys anywhere are rejected.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use stacking_core::datagen::DensityRegime;
use stacking_core::models::GarchParams;
use stacking_core::simplex::{SimplexWeights, DEFAULT_DENSITY_FLOOR};
use stacking_core::stackers::{Algorithm, StackerConfig};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Subset regression with 15 univariate models, none of them correct.
    Open,
    /// Subset regression with nested models; the last one is the truth.
    Closed,
    /// Piecewise-stationary regression with random-walk RFF-GP models.
    Drift,
    /// Simulated GARCH(1,1) returns with a bank of SMC filters.
    GarchSim,
    /// Synthetic density vectors fed straight to the stackers.
    DensityOnly,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Open => "open",
            Scenario::Closed => "closed",
            Scenario::Drift => "drift",
            Scenario::GarchSim => "garch-sim",
            Scenario::DensityOnly => "density-only",
        })
    }
}

fn default_suppress() -> usize {
    100
}

fn default_trials() -> usize {
    1
}

/// The file as written.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: Scenario,
    #[serde(default = "default_trials")]
    n_trials: usize,
    #[serde(default)]
    seed: u64,
    seeds: Option<Vec<u64>>,
    #[serde(default = "default_suppress")]
    suppress: usize,
    #[serde(default)]
    data: Option<toml::Table>,
    #[serde(default)]
    stackers: Vec<StackerSpec>,
    #[serde(default)]
    sweep: Option<SweepSpec>,
}

/// One `[[stackers]]` entry. Missing hyperparameters take the algorithm defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackerSpec {
    pub algorithm: String,
    pub label: Option<String>,
    pub learning_rate: Option<f64>,
    pub dma_forget: Option<f64>,
    pub ons_delta: Option<f64>,
    pub ons_beta: Option<f64>,
    pub dons_forget: Option<f64>,
    pub eg_smooth: Option<f64>,
    pub initial_weights: Option<Vec<f64>>,
    pub density_floor: Option<f64>,
}

impl StackerSpec {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm: algorithm.slug().to_string(),
            ..Self::default()
        }
    }

    pub fn to_config(&self) -> Result<StackerConfig, HarnessError> {
        let alg = Algorithm::from_slug(&self.algorithm)
            .ok_or_else(|| HarnessError::Config(format!("unknown algorithm `{}`", self.algorithm)))?;
        let mut c = StackerConfig::new(alg);
        if let Some(v) = self.learning_rate {
            c.learning_rate = v;
        }
        if let Some(v) = self.dma_forget {
            c.dma_forget = v;
        }
        if let Some(v) = self.ons_delta {
            c.ons_delta = v;
        }
        if let Some(v) = self.ons_beta {
            c.ons_beta = v;
        }
        if let Some(v) = self.dons_forget {
            c.dons_forget = v;
        }
        if let Some(v) = self.eg_smooth {
            c.eg_smooth = v;
        }
        if let Some(w) = &self.initial_weights {
            c.initial_weights = Some(
                SimplexWeights::new(w.clone())
                    .map_err(|e| HarnessError::Config(format!("initial_weights: {e}")))?,
            );
        }
        c.density_floor = self.density_floor.unwrap_or(DEFAULT_DENSITY_FLOOR);
        Ok(c)
    }
}

/// A validated stacker with its report label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledStacker {
    pub label: String,
    pub config: StackerConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_sweep_algorithms")]
    pub algorithms: Vec<String>,
    #[serde(default = "default_sweep_rates")]
    pub rates: Vec<f64>,
}

fn default_sweep_algorithms() -> Vec<String> {
    vec!["eg".into(), "ons".into()]
}

pub fn default_sweep_rates() -> Vec<f64> {
    vec![1e0, 1e-1, 1e-2, 1e-3, 1e-4]
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            algorithms: default_sweep_algorithms(),
            rates: default_sweep_rates(),
        }
    }
}

/// Subset-regression parameters shared by the open and closed scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubsetData {
    pub dim: usize,
    pub input_mean: f64,
    pub noise_var: f64,
    pub snr: f64,
    pub n_pretrain: usize,
    pub n_stream: usize,
    /// Log-spaced empirical-Bayes grid for the prior variance: `[lo, hi]`.
    pub prior_var_range: [f64; 2],
    pub noise_var_range: [f64; 2],
    pub grid_points: usize,
}

impl Default for SubsetData {
    fn default() -> Self {
        Self {
            dim: 15,
            input_mean: 5.0,
            noise_var: 1.0,
            snr: 0.8,
            n_pretrain: 1000,
            n_stream: 5000,
            prior_var_range: [1e-1, 1e4],
            noise_var_range: [1e-1, 1e2],
            grid_points: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftData {
    pub n_segments: usize,
    pub segment_length: usize,
    pub dim: usize,
    pub rff_features: usize,
    pub lengthscale: f64,
    /// One model per random-walk variance.
    pub drift_vars: Vec<f64>,
    pub prior_var: f64,
    pub noise_var: f64,
}

impl Default for DriftData {
    fn default() -> Self {
        Self {
            n_segments: 4,
            segment_length: 500,
            dim: 3,
            rff_features: 50,
            lengthscale: 2.0,
            drift_vars: vec![0.0, 1e-4, 1e-3, 1e-2],
            prior_var: 1.0,
            noise_var: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GarchData {
    pub alpha0: f64,
    pub alpha1: f64,
    pub beta: f64,
    pub n_steps: usize,
    pub n_particles: usize,
    pub rejuvenation_steps: usize,
    /// One filter per prior centre on β.
    pub prior_beta_means: Vec<f64>,
}

impl Default for GarchData {
    fn default() -> Self {
        Self {
            alpha0: 0.05,
            alpha1: 0.1,
            beta: 0.85,
            n_steps: 1000,
            n_particles: 200,
            rejuvenation_steps: 5,
            prior_beta_means: vec![0.3, 0.6, 0.9],
        }
    }
}

impl GarchData {
    pub fn params(&self) -> GarchParams {
        GarchParams {
            alpha0: self.alpha0,
            alpha1: self.alpha1,
            beta: self.beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityData {
    pub k: usize,
    pub steps: usize,
    pub regime: DensityRegime,
}

impl Default for DensityData {
    fn default() -> Self {
        Self {
            k: 5,
            steps: 2000,
            regime: DensityRegime::SingleDominant,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSpec {
    Subset(SubsetData),
    Drift(DriftData),
    Garch(GarchData),
    Density(DensityData),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub data: DataSpec,
    pub stackers: Vec<LabeledStacker>,
    /// One seed per trial.
    pub seeds: Vec<u64>,
    pub suppress: usize,
    pub sweep: SweepSpec,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub suppress: Option<usize>,
}

fn parse_data<T: serde::de::DeserializeOwned + Default>(table: Option<toml::Table>) -> Result<T, HarnessError> {
    match table {
        None => Ok(T::default()),
        Some(t) => t
            .try_into()
            .map_err(|e: toml::de::Error| HarnessError::Config(format!("[data]: {}", e.message()))),
    }
}

/// Default stacker list when the file names none.
pub fn default_stackers() -> Vec<StackerSpec> {
    [Algorithm::Obma, Algorithm::Eg, Algorithm::Ons]
        .into_iter()
        .map(StackerSpec::new)
        .collect()
}

/// Assigns labels: the given `label`, else the algorithm slug, suffixed
/// `@2`, `@3`, ... when a slug repeats.
pub fn label_stackers(specs: &[StackerSpec]) -> Result<Vec<LabeledStacker>, HarnessError> {
    let mut out: Vec<LabeledStacker> = Vec::with_capacity(specs.len());
    for spec in specs {
        let config = spec.to_config()?;
        let label = match &spec.label {
            Some(l) => {
                if l.is_empty() || l.contains([',', '"', '\n', '\r']) {
                    return Err(HarnessError::Config(format!("invalid stacker label `{l}`")));
                }
                l.clone()
            }
            None => {
                let slug = config.algorithm.slug();
                let n = out.iter().filter(|s| s.config.algorithm == config.algorithm).count();
                if n == 0 {
                    slug.to_string()
                } else {
                    format!("{slug}@{}", n + 1)
                }
            }
        };
        if out.iter().any(|s| s.label == label) {
            return Err(HarnessError::Config(format!("duplicate stacker label `{label}`")));
        }
        out.push(LabeledStacker { label, config });
    }
    Ok(out)
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, overrides: &Overrides) -> Result<Self, HarnessError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.message().to_string()))?;
        let data = match raw.scenario {
            Scenario::Open | Scenario::Closed => DataSpec::Subset(parse_data(raw.data)?),
            Scenario::Drift => DataSpec::Drift(parse_data(raw.data)?),
            Scenario::GarchSim => DataSpec::Garch(parse_data(raw.data)?),
            Scenario::DensityOnly => DataSpec::Density(parse_data(raw.data)?),
        };
        let n_trials = overrides.trials.unwrap_or(raw.n_trials);
        let seeds = match (&raw.seeds, overrides.seed, overrides.trials) {
            (Some(s), None, None) => s.clone(),
            (Some(s), None, Some(_)) if s.len() == n_trials => s.clone(),
            (Some(_), None, Some(_)) => {
                return Err(HarnessError::Config(
                    "--trials conflicts with the explicit seed list; pass --seed as well".into(),
                ))
            }
            (_, base, _) => {
                let base = base.unwrap_or(raw.seed);
                (0..n_trials as u64).map(|i| base.wrapping_add(i)).collect()
            }
        };
        let specs = if raw.stackers.is_empty() {
            default_stackers()
        } else {
            raw.stackers
        };
        let config = Self {
            scenario: raw.scenario,
            data,
            stackers: label_stackers(&specs)?,
            seeds,
            suppress: overrides.suppress.unwrap_or(raw.suppress),
            sweep: raw.sweep.unwrap_or_default(),
        };
        config.validate_with_trials(n_trials)?;
        Ok(config)
    }

    pub fn from_path(path: &Path, overrides: &Overrides) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn n_trials(&self) -> usize {
        self.seeds.len()
    }

    /// Number of models the scenario produces.
    pub fn n_models(&self) -> usize {
        match &self.data {
            DataSpec::Subset(d) => d.dim,
            DataSpec::Drift(d) => d.drift_vars.len(),
            DataSpec::Garch(d) => d.prior_beta_means.len(),
            DataSpec::Density(d) => d.k,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.validate_with_trials(self.seeds.len())
    }

    fn validate_with_trials(&self, n_trials: usize) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if n_trials == 0 {
            return bad("n_trials must be at least 1".into());
        }
        if self.seeds.len() != n_trials {
            return bad(format!("{} seeds given for {n_trials} trials", self.seeds.len()));
        }
        if self.stackers.is_empty() {
            return bad("at least one stacker is required".into());
        }
        let k = self.n_models();
        for s in &self.stackers {
            s.config
                .validate(k)
                .map_err(|e| HarnessError::Config(format!("stacker `{}`: {e}", s.label)))?;
        }
        match &self.data {
            DataSpec::Subset(d) => {
                if d.dim == 0 || d.n_pretrain == 0 || d.n_stream == 0 || d.grid_points == 0 {
                    return bad("dim, n_pretrain, n_stream and grid_points must be positive".into());
                }
                if !(d.noise_var > 0.0 && d.snr > 0.0) {
                    return bad("noise_var and snr must be positive".into());
                }
                for r in [d.prior_var_range, d.noise_var_range] {
                    if !(r[0] > 0.0 && r[1] >= r[0] && r[1].is_finite()) {
                        return bad(format!("invalid grid range {r:?}"));
                    }
                }
            }
            DataSpec::Drift(d) => {
                if d.n_segments == 0 || d.segment_length == 0 || d.dim == 0 || d.rff_features == 0 {
                    return bad("drift sizes must be positive".into());
                }
                if d.drift_vars.is_empty() || d.drift_vars.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return bad("drift_vars must be a non-empty list of non-negative values".into());
                }
                if !(d.lengthscale > 0.0 && d.prior_var > 0.0 && d.noise_var > 0.0) {
                    return bad("lengthscale, prior_var and noise_var must be positive".into());
                }
            }
            DataSpec::Garch(d) => {
                if !d.params().is_stationary() {
                    return bad("GARCH parameters must satisfy α₀ > 0, α₁, β ≥ 0, α₁ + β < 1".into());
                }
                if d.n_steps == 0 || d.n_particles == 0 || d.prior_beta_means.is_empty() {
                    return bad("n_steps, n_particles and prior_beta_means must be non-empty".into());
                }
            }
            DataSpec::Density(d) => {
                if d.k == 0 || d.steps == 0 {
                    return bad("k and steps must be positive".into());
                }
            }
        }
        if self.sweep.rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return bad("sweep rates must be positive".into());
        }
        for a in &self.sweep.algorithms {
            if !matches!(a.as_str(), "eg" | "ons") {
                return bad(format!("sweep supports eg and ons, not `{a}`"));
            }
        }
        Ok(())
    }
}
