//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file (CSV or JSON), with a 1-based line number where known.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Data violates an invariant (non-finite values, label out of range, ...).
    #[error("invalid data: {0}")]
    Invalid(String),

    /// Inconsistent dimensions between two inputs.
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    /// Bad configuration value.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or inconsistent model file.
    #[error("model file error: {0}")]
    Model(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
