use std::io;

use thiserror::Error;

/// Errors produced by the quantization toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Two inputs disagree on dimension, count or codebook layout.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// An argument is outside the domain of the operation.
    #[error("invalid argument: {0}")]
    Domain(String),
    /// The operation needs at least one vector.
    #[error("empty input: {0}")]
    Empty(String),
    /// A file does not follow the expected binary layout.
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
