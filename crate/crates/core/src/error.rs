//! Crate-wide error type.

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("division by zero at entry ({row}, {col})")]
    DivisionByZero { row: usize, col: usize },

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("empty accumulator: no tensors registered")]
    EmptyAccumulator,

    #[error("step {t} outside schedule range 1..={ms}")]
    StepOutOfRange { t: usize, ms: usize },

    #[error("training aborted at step {step}: {reason}")]
    TrainingAborted { step: usize, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("incompatible reports: {0}")]
    IncompatibleReports(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(String),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
