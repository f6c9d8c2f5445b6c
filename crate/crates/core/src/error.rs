use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = QahmError> = std::result::Result<T, E>;

#[derive(Error, Debug)]
pub enum QahmError {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("{0}")]
    Usage(String),
    #[error("capacity exceeded: {what} is {actual}, limit is {limit}")]
    Capacity {
        what: &'static str,
        actual: usize,
        limit: usize,
    },
    #[error("backend `{backend}` cannot {operation}")]
    WrongBackend {
        backend: &'static str,
        operation: &'static str,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no valid embedding of K_{n_logical} found after {restarts} restarts")]
    EmbeddingNotFound { n_logical: usize, restarts: usize },
    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("checkpoint integrity error: {0}")]
    Integrity(String),
    #[error("non-finite parameter after epoch {epoch}: {detail}")]
    NonFinite { epoch: usize, detail: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl QahmError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        QahmError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(context: &'static str, expected: usize, actual: usize) -> Self {
        QahmError::Shape {
            context,
            expected,
            actual,
        }
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(QahmError::shape(context, expected, actual))
    }
}
