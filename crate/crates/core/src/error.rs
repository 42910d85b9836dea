use std::path::PathBuf;

use thiserror::Error;

/// Every failure the pipeline can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed dataset: {0}")]
    MalformedDataset(String),

    #[error("parse error in {file} at row {row}: {msg}")]
    Parse { file: PathBuf, row: usize, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("recording too short: {rows} rows, need more than {min}")]
    RecordingTooShort { rows: usize, min: usize },

    #[error("signal too short: {len} samples, need at least {min}")]
    SignalTooShort { len: usize, min: usize },

    #[error("state mismatch: {0}")]
    StateMismatch(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("insufficient subjects in group {group}: have {have}, need {need}")]
    InsufficientSubjects { group: String, have: usize, need: usize },

    #[error("invalid config: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MalformedDataset(_) => "MalformedDataset",
            Error::Parse { .. } => "ParseError",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::RecordingTooShort { .. } => "RecordingTooShort",
            Error::SignalTooShort { .. } => "SignalTooShort",
            Error::StateMismatch(_) => "StateMismatch",
            Error::Shape(_) => "ShapeError",
            Error::Numerical(_) => "NumericalError",
            Error::InsufficientSubjects { .. } => "InsufficientSubjects",
            Error::Config(_) => "ConfigError",
            Error::Io(_) => "IoError",
            Error::Json(_) => "JsonError",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
