use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("ingestion error in {file}: {message}")]
    Ingest { file: String, message: String },

    #[error("basin `{0}` not found")]
    Lookup(String),

    #[error("infill failed for variable `{variable}`: {message}")]
    Infill { variable: String, message: String },

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unsupported model: {0}")]
    Unsupported(String),

    #[error("incompatible inputs: {0}")]
    Compatibility(String),

    #[error("malformed container {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn ingest(file: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Ingest {
            file: file.into(),
            message: message.into(),
        }
    }
}
