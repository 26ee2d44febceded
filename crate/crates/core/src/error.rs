use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("unexpected column `{0}` not bound by the column map")]
    UnknownColumn(String),

    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },

    #[error("invalid dataset: {0}")]
    Validation(String),

    #[error("no events in dataset: risk sets are empty")]
    NoEvents,

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("numerical failure at column `{column}`: {msg}")]
    Numerical { column: String, msg: String },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("model document: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn row(row: usize, msg: impl Into<String>) -> Self {
        Error::Row { row, msg: msg.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv { path: path.into(), source }
    }
}
