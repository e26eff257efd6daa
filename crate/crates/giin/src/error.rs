use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or layer dimensions do not conform. Both shapes are named.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: String,
        expected: String,
        got: String,
    },

    /// Input outside the operation's domain (empty softmax, oversized crop, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// An index (class target, node id) out of range.
    #[error("index {index} out of range for length {len} in {context}")]
    Index {
        index: usize,
        len: usize,
        context: String,
    },

    /// Invalid or inconsistent configuration.
    #[error("config error: {0}")]
    Config(String),

    /// A manifest or schema row failed validation.
    #[error("schema error at row {row}, column {column}: {message}")]
    Schema {
        row: usize,
        column: String,
        message: String,
    },

    /// An internal invariant was violated (zero std, missing optimizer state, ...).
    #[error("invariant violation: {0}")]
    Invariant(String),

    /// A binary or text file did not match its expected format.
    #[error("format error: {0}")]
    Format(String),

    /// A metric is undefined for the given data (e.g. single-class AUC).
    #[error("undefined metric: {0}")]
    Metric(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(context: impl Into<String>, expected: &[usize], got: &[usize]) -> Self {
        Error::Shape {
            context: context.into(),
            expected: format!("{expected:?}"),
            got: format!("{got:?}"),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
