use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty sample")]
    EmptySample,
    #[error("invalid quantile level {0}: must lie strictly between 0 and 1")]
    InvalidLevel(f64),
    #[error("weights must be non-negative and not all zero")]
    ZeroWeights,
    #[error("negative kernel argument {0}")]
    NegativeKernelArgument(f64),
    #[error("degenerate bandwidth: all points are identical")]
    DegenerateBandwidth,
    #[error("invalid bandwidth {0}")]
    InvalidBandwidth(f64),
    #[error("batch fraction {0} must lie in (0, 1]")]
    InvalidBatchFraction(f64),
    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("rank-deficient design matrix")]
    RankDeficient,
    #[error("k = {k} exceeds the number of training points ({n})")]
    TooManyNeighbors { k: usize, n: usize },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("score inversion diverges: {0}")]
    DivergentInversion(String),
    #[error("not closed-form invertible: {0}")]
    NotInvertible(String),
    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model has not been fitted")]
    NotFitted,
    #[error("csv error at row {row}: {message}")]
    Csv { row: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
