use ebcal::error::CalibError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("config: {0}")]
    Config(String),

    #[error("output: {0}")]
    Output(String),

    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error(transparent)]
    Calib(#[from] CalibError),
}

impl CliError {
    /// Process exit status. Each library error kind has its own code.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Output(_) => 4,
            CliError::CheckFailed(_) => 5,
            CliError::Calib(e) => match e {
                CalibError::DimensionMismatch { .. } => 10,
                CalibError::NotPositiveDefinite { .. } => 11,
                CalibError::InvalidParameter(_) => 12,
                CalibError::InsufficientData { .. } => 13,
                CalibError::NegativeVariance { .. } => 14,
                CalibError::InvalidLevel(_) => 15,
                CalibError::AllStartsFailed { .. } => 16,
                CalibError::InvalidInitialState => 17,
                CalibError::Data { .. } => 18,
                CalibError::MissingColumn(_) => 19,
                CalibError::Io(_) => 20,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
