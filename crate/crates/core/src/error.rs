//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value (bad hyperparameter, bad fractions, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Tensor shape does not match what an operation requires.
    #[error("shape error: {0}")]
    Shape(String),

    /// Invalid runtime input (label out of range, length mismatch, ...).
    #[error("input error: {0}")]
    Input(String),

    /// An internal API contract was violated (key-set mismatch, non-scalar loss, ...).
    #[error("contract error: {0}")]
    Contract(String),

    /// Malformed container or checkpoint file.
    #[error("format error: {0}")]
    Format(String),

    /// Non-finite values where finite ones are required (NaN loss abort, ...).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A parameter reached a degenerate state (zero-norm weight direction, ...).
    #[error("degenerate parameter: {0}")]
    DegenerateParameter(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
