use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("{routine} did not converge after {iterations} sweeps")]
    NonConvergence {
        routine: &'static str,
        iterations: usize,
    },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("parameters are not at an optimum (gradient norm {grad_norm:e} > {tolerance:e})")]
    NotAtOptimum { grad_norm: f64, tolerance: f64 },

    #[error("activation `{0}` is not smooth; Hessian analysis requires tanh or identity")]
    NonSmoothActivation(&'static str),

    #[error("format error: {0}")]
    Format(String),

    #[error("output directory {0} already exists and is not empty (pass --overwrite to replace)")]
    OutputExists(PathBuf),

    #[error("run {run_id} failed: {source}")]
    Run {
        run_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
