use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("metric matrix is not symmetric positive definite")]
    InvalidMetric,
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("weights collapsed to zero at step {step}")]
    NumericCollapse { step: u64 },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("particle filter degenerate at step {step}")]
    DegenerateFilter { step: u64 },
    #[error("contract violation: {0}")]
    ContractViolation(String),
}

pub type Result<T> = core::result::Result<T, Error>;
