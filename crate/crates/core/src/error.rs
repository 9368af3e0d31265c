use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to parse cell at row {row}, column {col}: {value:?}")]
    Parse { row: usize, col: usize, value: String },

    #[error("target column {0} not found")]
    MissingTarget(String),

    #[error("classification target has {0} distinct values, expected 2")]
    NonBinaryLabel(usize),

    #[error("instance {0} has all-zero features and cannot be normalized")]
    ZeroRow(usize),

    #[error("split would leave an empty partition (n = {n}, fraction = {fraction})")]
    EmptySplit { n: usize, fraction: f64 },

    #[error("gram matrix is not positive definite (jitter = {jitter:e}); try a larger jitter")]
    NotPositiveDefinite { jitter: f64 },

    #[error("parameters do not match algorithm {0}")]
    FamilyMismatch(String),

    #[error("solver did not converge after {iterations} iterations (last change {last_change:e})")]
    NotConverged { iterations: usize, last_change: f64 },

    #[error("every row of the attack system was masked")]
    AllMasked,

    #[error("normal equations are singular (condition number {0:e})")]
    SingularNormalEquations(f64),

    #[error("query matrix has rank {rank} < {needed}")]
    DegenerateQueries { rank: usize, needed: usize },

    #[error("oracle confidence {0} is outside (0, 1)")]
    ConfidenceOutOfRange(f64),

    #[error("algorithm {0} is not supported by this operation")]
    UnsupportedAlgorithm(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("strategy failed: {0}")]
    StrategyFailed(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the numbers rather than by malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::NotConverged { .. }
                | Error::AllMasked
                | Error::SingularNormalEquations(_)
                | Error::DegenerateQueries { .. }
                | Error::ConfidenceOutOfRange(_)
                | Error::StrategyFailed(_)
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
