use thiserror::Error;

/// Errors raised by the calibration library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("covariance not positive definite after jitter levels {attempted:?}")]
    NotPositiveDefinite { attempted: Vec<f64> },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("negative predictive variance {value:e} at target {index}")]
    NegativeVariance { index: usize, value: f64 },

    #[error("credible level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),

    #[error("every optimizer start failed: {}", .failures.join("; "))]
    AllStartsFailed { failures: Vec<String> },

    #[error("initial state has zero posterior density")]
    InvalidInitialState,

    #[error("data error at row {row}, column '{column}': {message}")]
    Data {
        row: usize,
        column: String,
        message: String,
    },

    #[error("missing column '{0}'")]
    MissingColumn(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl CalibError {
    pub(crate) fn dims(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        CalibError::DimensionMismatch {
            context: context.into(),
            expected,
            actual,
        }
    }
}

impl From<std::io::Error> for CalibError {
    fn from(e: std::io::Error) -> Self {
        CalibError::Io(e.to_string())
    }
}

impl From<csv::Error> for CalibError {
    fn from(e: csv::Error) -> Self {
        CalibError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CalibError>;
