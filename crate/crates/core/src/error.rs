use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("index {index} out of range for {len} samples")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    /// A dataset violates one of the standing data assumptions.
    #[error("dataset rejected ({assumption}): {detail}")]
    Assumption {
        assumption: &'static str,
        detail: String,
    },

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("zero denominator at coordinate {0}")]
    ZeroDenominator(usize),

    #[error("margin problem is infeasible: data are not linearly separable")]
    Infeasible,

    #[error("numerical failure: {0}")]
    Numeric(String),

    /// A training run produced a non-finite loss or iterate. `last_good` is the
    /// last iterate whose loss was finite.
    #[error("run diverged at step {step}")]
    Diverged { step: u64, last_good: Vec<f64> },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the numbers rather than the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::ZeroDenominator(_)
                | Error::Infeasible
                | Error::Numeric(_)
                | Error::Diverged { .. }
        )
    }
}
