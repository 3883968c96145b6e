use std::path::PathBuf;

use thiserror::Error;

use crate::tle::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("TLE format error: {0}")]
    Parse(#[from] ParseError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}: no valid records")]
    NoValidRecords(String),

    #[error("catalog error: {0}")]
    Catalog(String),

    #[error("fetch error: {0}")]
    Fetch(#[from] crate::tle::fetch::FetchError),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("model error: {0}")]
    Model(String),

    #[error("insufficient training data: {have} rows, need {need}")]
    InsufficientData { have: usize, need: usize },

    #[error("training aborted: {0}")]
    Training(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("serialization error: {0}")]
    Serde(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
