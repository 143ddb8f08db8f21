use thiserror::Error;

/// Errors raised by the calibration library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("ragged panel: missing cell (unit {unit}, time {time})")]
    RaggedPanel { unit: String, time: i64 },

    #[error("empty panel: {0}")]
    EmptyPanel(String),

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short category tag used for CLI error lines.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) | Error::Dimension { .. } => "input",
            Error::RaggedPanel { .. } | Error::EmptyPanel(_) | Error::Parse { .. } => "data",
            Error::Singular(_) => "numeric",
            Error::NotApplicable(_) => "not-applicable",
            Error::Csv(_) | Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
