use thiserror::Error;

/// Errors raised by the library. Assumption *violations* found on a realized
/// log are not errors; they are reported by [`crate::types::validate_log`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpeError {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid sample at period {period}: {reason}")]
    InvalidSample { period: usize, reason: String },

    #[error("behavior policy emitted an invalid probability vector at period {period}: {reason}")]
    BehaviorPolicy { period: usize, reason: String },

    #[error("zero logged propensity for the realized action at period {period}")]
    ZeroPropensity { period: usize },

    #[error("variance weight {value} at period {period} is below the floor {epsilon}")]
    WeightBelowFloor {
        period: usize,
        value: f64,
        epsilon: f64,
    },

    #[error("requested {requested} rows but only {available} are available")]
    InsufficientRows { requested: usize, available: usize },

    #[error("class {0} has no training examples")]
    MissingClass(usize),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for OpeError {
    fn from(e: std::io::Error) -> Self {
        OpeError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, OpeError>;
