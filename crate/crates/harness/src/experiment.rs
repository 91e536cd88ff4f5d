//! The per-trial loop: models score each observation, stackers combine the
//! scores, then everything conditions on the observation.

use rayon::prelude::*;
use stacking_core::datagen::{
    build_closed_bank, build_open_bank, gen_density_stream, gen_drift_stream, gen_garch_series,
    gen_subset_regression, StreamRecord, SubsetRegressionSpec,
};
use stacking_core::models::{
    empirical_bayes_fit, log_grid, BayesLinearModel, FeatureMap, GarchPrior, GarchSmc, GarchSmcConfig,
    LinearHyper, PredictiveModel, RffBasis, TruncatedNormal,
};
use stacking_core::rng::{derive_seed, StreamRng};
use stacking_core::simplex::{DensityVector, SimplexWeights, DEFAULT_DENSITY_FLOOR};
use stacking_core::stackers::{
    bma_evidence_bound, solve_bcrp, stacking_evidence, telescoping_residuals, Algorithm, BcrpSolution,
    Stacker, StackerConfig, TelescopingCheck,
};

use crate::config::{
    DataSpec, DensityData, DriftData, ExperimentConfig, GarchData, LabeledStacker, Scenario, SubsetData,
};

const DATA_TAG: u64 = 1;
const MODEL_TAG: u64 = 1000;

/// Why a trial stopped.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("trial {trial} (seed {seed}){}: {source_name}: {message}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
pub struct TrialError {
    pub trial: usize,
    pub seed: u64,
    /// 1-based stream step, when the failure happened mid-stream.
    pub step: Option<usize>,
    /// The model or stacker that failed.
    pub source_name: String,
    pub message: String,
}

/// Something a model reported without failing the trial.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelEvent {
    pub model: usize,
    pub step: u64,
    pub kind: String,
}

/// Per-step densities of every model for one trial.
#[derive(Debug, Clone)]
pub struct DensityTrace {
    pub model_names: Vec<String>,
    pub history: Vec<DensityVector>,
    pub model_events: Vec<ModelEvent>,
}

#[derive(Debug, Clone)]
pub struct StackerTrace {
    pub label: String,
    pub config: StackerConfig,
    /// Weights that scored step `t` (row `t − 1`).
    pub weights: Vec<SimplexWeights>,
    /// Weights after the last update.
    pub final_weights: SimplexWeights,
    /// `log(w_t·r_t)`.
    pub log_ens: Vec<f64>,
    /// Running mean of `log_ens`.
    pub avg_pll: Vec<f64>,
    /// `Σ_{τ≤t} log(w*·r_τ) − Σ_{τ≤t} log(w_τ·r_τ)` for the full-history BCRP `w*`.
    pub regret: Vec<f64>,
    /// 1-based steps at which some weight fell below the collapse threshold.
    pub collapse_steps: Vec<usize>,
}

impl StackerTrace {
    pub fn log_wealth(&self) -> f64 {
        self.log_ens.iter().sum()
    }

    pub fn final_avg_pll(&self) -> f64 {
        self.avg_pll.last().copied().unwrap_or(f64::NAN)
    }

    /// Mean `log_ens` over steps `t > suppress`; all steps if that is empty.
    pub fn avg_pll_after(&self, suppress: usize) -> f64 {
        let tail = if suppress < self.log_ens.len() {
            &self.log_ens[suppress..]
        } else {
            &self.log_ens[..]
        };
        tail.iter().sum::<f64>() / tail.len() as f64
    }

    pub fn final_regret(&self) -> f64 {
        self.regret.last().copied().unwrap_or(0.0)
    }

    pub fn prior(&self) -> SimplexWeights {
        self.config
            .initial_weights
            .clone()
            .unwrap_or_else(|| SimplexWeights::uniform(self.final_weights.len()))
    }

    /// Whether the weights telescope as O-BMA: O-BMA itself and Hedge at `η = 1`.
    pub fn is_bayes_trace(&self) -> bool {
        match self.config.algorithm {
            Algorithm::Obma => true,
            Algorithm::Hedge => self.config.learning_rate == 1.0,
            Algorithm::Dma => self.config.dma_forget == 1.0,
            _ => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub scenario: Scenario,
    pub trial: usize,
    pub seed: u64,
    pub suppress: usize,
    pub model_names: Vec<String>,
    pub history: Vec<DensityVector>,
    pub stackers: Vec<StackerTrace>,
    pub bcrp: BcrpSolution,
    pub model_events: Vec<ModelEvent>,
}

impl RunReport {
    pub fn steps(&self) -> usize {
        self.history.len()
    }

    pub fn k(&self) -> usize {
        self.model_names.len()
    }

    pub fn stacker(&self, label: &str) -> Option<&StackerTrace> {
        self.stackers.iter().find(|s| s.label == label)
    }

    /// Telescoping residuals of every O-BMA-type stacker.
    pub fn identity_checks(&self) -> Vec<(String, TelescopingCheck)> {
        self.stackers
            .iter()
            .filter(|s| s.is_bayes_trace())
            .filter_map(|s| {
                telescoping_residuals(&self.history, &s.weights, &s.final_weights, &s.prior())
                    .ok()
                    .map(|c| (s.label.clone(), c))
            })
            .collect()
    }

    /// Smallest per-step ratio `min_k r_k / max_k r_k` over the trace.
    pub fn market_variability(&self) -> f64 {
        self.history
            .iter()
            .map(|r| {
                let v = r.values();
                let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = v.iter().copied().fold(0.0, f64::max);
                lo / hi
            })
            .fold(1.0, f64::min)
    }
}

/// `Σ_t log(w·r_t)` over the report's density history.
pub fn compute_stacking_evidence(report: &RunReport, w: &SimplexWeights) -> f64 {
    stacking_evidence(&report.history, w)
}

/// `(Σ_k w_k Σ_t log r_{t,k}, max_k Σ_t log r_{t,k})`.
pub fn compute_bma_evidence_bound(report: &RunReport, w: &SimplexWeights) -> (f64, f64) {
    bma_evidence_bound(&report.history, w)
}

struct TrialCtx {
    trial: usize,
    seed: u64,
}

impl TrialCtx {
    fn err(&self, step: Option<usize>, source_name: impl Into<String>, e: impl std::fmt::Display) -> TrialError {
        TrialError {
            trial: self.trial,
            seed: self.seed,
            step,
            source_name: source_name.into(),
            message: e.to_string(),
        }
    }
}

/// Runs a bank of models over a stream, scoring before observing.
fn stream_densities<M: PredictiveModel>(
    ctx: &TrialCtx,
    models: &mut [M],
    names: &[String],
    stream: &[StreamRecord],
) -> Result<Vec<DensityVector>, TrialError> {
    let mut history = Vec::with_capacity(stream.len());
    let mut lp = vec![0.0; models.len()];
    for (t, rec) in stream.iter().enumerate() {
        for (k, m) in models.iter_mut().enumerate() {
            lp[k] = m
                .predict_log_density(&rec.x, rec.y)
                .map_err(|e| ctx.err(Some(t + 1), &names[k], e))?;
        }
        let r = DensityVector::from_log_densities(&lp, DEFAULT_DENSITY_FLOOR)
            .map_err(|e| ctx.err(Some(t + 1), "densities", e))?;
        history.push(r);
        for (k, m) in models.iter_mut().enumerate() {
            m.observe(&rec.x, rec.y).map_err(|e| ctx.err(Some(t + 1), &names[k], e))?;
        }
    }
    Ok(history)
}

fn subset_densities(
    ctx: &TrialCtx,
    d: &SubsetData,
    closed: bool,
) -> Result<DensityTrace, TrialError> {
    let spec = SubsetRegressionSpec {
        dim: d.dim,
        input_mean: d.input_mean,
        noise_var: d.noise_var,
        snr: d.snr,
        n_pretrain: d.n_pretrain,
        n_stream: d.n_stream,
        seed: derive_seed(ctx.seed, DATA_TAG),
    };
    let data = gen_subset_regression(&spec).map_err(|e| ctx.err(None, "data", e))?;
    let bank = if closed {
        build_closed_bank(&data.theta)
    } else {
        build_open_bank(&data.theta)
    };
    let prior_grid = log_grid(d.prior_var_range[0], d.prior_var_range[1], d.grid_points);
    let noise_grid = log_grid(d.noise_var_range[0], d.noise_var_range[1], d.grid_points);
    let grid: Vec<LinearHyper> = prior_grid
        .iter()
        .flat_map(|&prior_var| noise_grid.iter().map(move |&noise_var| LinearHyper { prior_var, noise_var }))
        .collect();

    let mut models = Vec::with_capacity(bank.len());
    let mut names = Vec::with_capacity(bank.len());
    for (k, indices) in bank.into_iter().enumerate() {
        let name = if closed {
            format!("linear(x1..x{})", k + 1)
        } else {
            format!("linear(x{})", k + 1)
        };
        let features = FeatureMap::subset(indices)
            .normalized_on(data.pretrain.iter().map(|r| r.x.as_slice()))
            .map_err(|e| ctx.err(None, &name, e))?;
        let fit = empirical_bayes_fit(&data.pretrain, &grid, |h| BayesLinearModel::new(features.clone(), *h, 0.0))
            .map_err(|e| ctx.err(None, &name, e))?;
        // Hyperparameters come from the pretraining split; the weights start from the prior.
        models.push(BayesLinearModel::new(features, fit.hyper, 0.0).map_err(|e| ctx.err(None, &name, e))?);
        names.push(name);
    }
    let history = stream_densities(ctx, &mut models, &names, &data.stream)?;
    Ok(DensityTrace {
        model_names: names,
        history,
        model_events: Vec::new(),
    })
}

fn drift_densities(ctx: &TrialCtx, d: &DriftData) -> Result<DensityTrace, TrialError> {
    let ds = gen_drift_stream(d.n_segments, d.segment_length, d.dim, derive_seed(ctx.seed, DATA_TAG))
        .map_err(|e| ctx.err(None, "data", e))?;
    let mut rng = StreamRng::derived(ctx.seed, MODEL_TAG);
    let basis = RffBasis::sample(d.dim, d.rff_features, d.lengthscale, RffBasis::UNIT_AMPLITUDE, &mut rng)
        .map_err(|e| ctx.err(None, "rff basis", e))?;
    let hyper = LinearHyper {
        prior_var: d.prior_var,
        noise_var: d.noise_var,
    };
    let names: Vec<String> = d.drift_vars.iter().map(|q| format!("rff-gp(q={q:e})")).collect();
    let mut models = d
        .drift_vars
        .iter()
        .zip(&names)
        .map(|(&q, name)| BayesLinearModel::new(FeatureMap::Rff(basis.clone()), hyper, q).map_err(|e| ctx.err(None, name, e)))
        .collect::<Result<Vec<_>, _>>()?;
    let history = stream_densities(ctx, &mut models, &names, &ds.records)?;
    Ok(DensityTrace {
        model_names: names,
        history,
        model_events: Vec::new(),
    })
}

fn garch_densities(ctx: &TrialCtx, d: &GarchData) -> Result<DensityTrace, TrialError> {
    let ys = gen_garch_series(&d.params(), d.n_steps, derive_seed(ctx.seed, DATA_TAG))
        .map_err(|e| ctx.err(None, "data", e))?;
    let stream: Vec<StreamRecord> = ys
        .iter()
        .enumerate()
        .map(|(t, &y)| StreamRecord { t, x: Vec::new(), y })
        .collect();
    let base = GarchPrior::default();
    let names: Vec<String> = d.prior_beta_means.iter().map(|m| format!("garch-smc(beta~{m})")).collect();
    let mut models = d
        .prior_beta_means
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let prior = GarchPrior {
                beta: TruncatedNormal::new(m, base.beta.sd, base.beta.lo, base.beta.hi),
                ..base
            };
            let config = GarchSmcConfig {
                n_particles: d.n_particles,
                rejuvenation_steps: d.rejuvenation_steps,
                prior,
                ..GarchSmcConfig::default()
            };
            GarchSmc::new(config, derive_seed(ctx.seed, MODEL_TAG + k as u64)).map_err(|e| ctx.err(None, &names[k], e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let history = stream_densities(ctx, &mut models, &names, &stream)?;
    let model_events = models
        .iter()
        .enumerate()
        .flat_map(|(k, m)| {
            m.degenerate_steps.iter().map(move |&step| ModelEvent {
                model: k,
                step,
                kind: "degenerate-filter".into(),
            })
        })
        .collect();
    Ok(DensityTrace {
        model_names: names,
        history,
        model_events,
    })
}

fn density_only(ctx: &TrialCtx, d: &DensityData) -> Result<DensityTrace, TrialError> {
    let history = gen_density_stream(d.k, d.steps, d.regime, derive_seed(ctx.seed, DATA_TAG))
        .map_err(|e| ctx.err(None, "data", e))?;
    Ok(DensityTrace {
        model_names: (1..=d.k).map(|k| format!("density-{k}")).collect(),
        history,
        model_events: Vec::new(),
    })
}

/// Generates the data of one trial and collects every model's predictive
/// density at each observation.
pub fn simulate_densities(config: &ExperimentConfig, trial: usize) -> Result<DensityTrace, TrialError> {
    let ctx = TrialCtx {
        trial,
        seed: config.seeds[trial],
    };
    match &config.data {
        DataSpec::Subset(d) => subset_densities(&ctx, d, config.scenario == Scenario::Closed),
        DataSpec::Drift(d) => drift_densities(&ctx, d),
        DataSpec::Garch(d) => garch_densities(&ctx, d),
        DataSpec::Density(d) => density_only(&ctx, d),
    }
}

/// Runs every stacker over a density history and fills in the BCRP regret.
pub fn run_stackers(
    history: &[DensityVector],
    stackers: &[LabeledStacker],
) -> Result<(Vec<StackerTrace>, BcrpSolution), (Option<usize>, String, String)> {
    let k = history.first().map(|r| r.len()).ok_or((None, "stream".to_string(), "empty stream".to_string()))?;
    let bcrp = solve_bcrp(history).map_err(|e| (None, "bcrp".to_string(), e.to_string()))?;
    let best: Vec<f64> = history.iter().map(|r| r.log_mixture(&bcrp.weights)).collect();
    let traces = stackers
        .iter()
        .map(|ls| {
            let fail = |step: Option<usize>, e: stacking_core::Error| (step, ls.label.clone(), e.to_string());
            let mut stacker = Stacker::new(ls.config.clone(), k).map_err(|e| fail(None, e))?;
            let n = history.len();
            let mut weights = Vec::with_capacity(n);
            let mut log_ens = Vec::with_capacity(n);
            let mut avg_pll = Vec::with_capacity(n);
            let mut regret = Vec::with_capacity(n);
            let mut collapse_steps = Vec::new();
            let (mut cum, mut cum_best) = (0.0, 0.0);
            for (t, r) in history.iter().enumerate() {
                weights.push(stacker.weights().clone());
                let out = stacker.observe(r).map_err(|e| fail(Some(t + 1), e))?;
                if out.collapse {
                    collapse_steps.push(t + 1);
                }
                cum += out.log_mixture;
                cum_best += best[t];
                log_ens.push(out.log_mixture);
                avg_pll.push(cum / (t + 1) as f64);
                regret.push(cum_best - cum);
            }
            Ok(StackerTrace {
                label: ls.label.clone(),
                config: ls.config.clone(),
                weights,
                final_weights: stacker.weights().clone(),
                log_ens,
                avg_pll,
                regret,
                collapse_steps,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((traces, bcrp))
}

fn assemble(
    config: &ExperimentConfig,
    trial: usize,
    stackers: &[LabeledStacker],
    densities: DensityTrace,
) -> Result<RunReport, TrialError> {
    let seed = config.seeds[trial];
    let (traces, bcrp) = run_stackers(&densities.history, stackers).map_err(|(step, source_name, message)| TrialError {
        trial,
        seed,
        step,
        source_name,
        message,
    })?;
    Ok(RunReport {
        scenario: config.scenario,
        trial,
        seed,
        suppress: config.suppress,
        model_names: densities.model_names,
        history: densities.history,
        stackers: traces,
        bcrp,
        model_events: densities.model_events,
    })
}

/// One trial with the configured stackers.
pub fn run_trial(config: &ExperimentConfig, trial: usize) -> Result<RunReport, TrialError> {
    let densities = simulate_densities(config, trial)?;
    assemble(config, trial, &config.stackers, densities)
}

/// Every trial, in trial order. Trials run in parallel and fail independently.
pub fn run_experiment(config: &ExperimentConfig) -> Vec<Result<RunReport, TrialError>> {
    (0..config.n_trials())
        .into_par_iter()
        .map(|i| run_trial(config, i))
        .collect()
}

/// Runs several stacker lists against the same simulated densities of each
/// trial. Result is indexed `[trial][list]`.
pub fn run_stacker_sets(
    config: &ExperimentConfig,
    sets: &[Vec<LabeledStacker>],
) -> Vec<Vec<Result<RunReport, TrialError>>> {
    (0..config.n_trials())
        .into_par_iter()
        .map(|i| match simulate_densities(config, i) {
            Ok(d) => sets
                .par_iter()
                .map(|set| assemble(config, i, set, d.clone()))
                .collect(),
            Err(e) => sets.iter().map(|_| Err(e.clone())).collect(),
        })
        .collect()
}
