use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("index error: {what} index {index} out of range (limit {limit})")]
    Index {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("shape error: {what}: expected {expected}, found {found}")]
    Shape {
        what: String,
        expected: String,
        found: String,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("state error: {0}")]
    State(String),

    #[error("entropy exhausted: needed {needed} bytes, {available} remain in {path}")]
    EntropyExhausted {
        path: PathBuf,
        needed: usize,
        available: usize,
    },

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("unseen category {value:?} in column {column:?}")]
    UnseenCategory { column: String, value: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("serialization error: {0}")]
    Serde(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(what: impl Into<String>, expected: impl ToString, found: impl ToString) -> Self {
        Error::Shape {
            what: what.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
