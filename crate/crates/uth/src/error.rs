//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by dataset handling, training, and evaluation.
#[derive(Debug, Error)]
pub enum UthError {
    /// Caller passed inconsistent or out-of-range arguments.
    #[error("argument error: {0}")]
    Argument(String),

    /// A byte stream does not match the expected file layout. `offset` is
    /// the position (from the start of the stream) where decoding failed.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    /// Data is structurally well-formed but semantically unusable
    /// (non-finite values, duplicate ids, unresolved references, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// Training produced non-finite parameters.
    #[error("divergence: {0}")]
    Divergence(String),

    /// The request is outside what the implementation supports.
    #[error("capability error: {0}")]
    Capability(String),

    /// Triplet sampling could not find a valid triplet within the retry
    /// budget, typically because the distance windows are too narrow.
    #[error("triplet sampler exhausted after {retries} retries: {message}")]
    SamplerExhausted { retries: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl UthError {
    pub(crate) fn format(offset: usize, message: impl Into<String>) -> Self {
        UthError::Format {
            offset,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, UthError>;
