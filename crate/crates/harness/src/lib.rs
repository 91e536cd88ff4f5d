//! Experiment runner for online Bayesian stacking: scenario simulation,
//! per-trial reports, learning-rate sweeps and trace replay checks.

pub mod checks;
pub mod config;
pub mod experiment;
pub mod report;
pub mod sweep;

pub use config::{ExperimentConfig, Overrides, Scenario};
pub use experiment::{
    compute_bma_evidence_bound, compute_stacking_evidence, run_experiment, run_trial, RunReport, StackerTrace,
    TrialError,
};
pub use report::{parse_trace, write_report};
pub use sweep::sweep_learning_rates;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid trace: {0}")]
    Trace(String),
    #[error(transparent)]
    Core(#[from] stacking_core::Error),
    #[error(transparent)]
    Trial(#[from] TrialError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// Process exit code: 1 for configuration problems, 2 for everything numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            _ => 2,
        }
    }
}
