use thiserror::Error;

/// Errors raised by oracles, solvers and the verification harness.
#[derive(Debug, Error)]
pub enum VosError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    Parameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("capability missing: {0}")]
    Capability(String),

    #[error("{what} did not converge (residual {residual:e})")]
    Convergence { what: String, residual: f64 },

    #[error("iterates diverged at iteration {iteration}")]
    Divergence {
        iteration: usize,
        last_finite: Box<crate::solvers::SchemeState>,
    },

    #[error("integration failed at t = {time}: {reason}")]
    Integration { time: f64, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("trace parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, VosError>;

pub(crate) fn parameter(name: &'static str, value: f64, reason: &'static str) -> VosError {
    VosError::Parameter {
        name,
        value,
        reason,
    }
}
