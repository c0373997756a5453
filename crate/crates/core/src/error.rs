use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the cleaning, summarizing and fitting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },
    #[error("duplicate entry for subject {subject} at {timestamp}")]
    Conflict { subject: String, timestamp: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty cohort: {0}")]
    EmptyCohort(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("point {value} lies outside the basis domain [{lower}, {upper}]")]
    OutsideDomain { value: f64, lower: f64, upper: f64 },
    #[error("bin grids do not match: {0}")]
    GridMismatch(String),
    #[error("design is rank deficient beyond the penalty null space; confounded columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },
    #[error("non-finite REML score at log(lambda) = {log_lambda:?}")]
    NonFinite { log_lambda: Vec<f64> },
    #[error("covariance matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e}); add ridge jitter of about {suggested_jitter:e} to the diagonal")]
    NotPsd {
        min_eigenvalue: f64,
        suggested_jitter: f64,
    },
    #[error("smoothing parameter optimization failed from every start: {0}")]
    OptimizerFailed(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
