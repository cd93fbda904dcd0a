//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    /// Malformed file contents (WAV header, checkpoint payload, config syntax).
    #[error("format error: {0}")]
    Format(String),
    #[error("unsupported codec: {0}")]
    UnsupportedCodec(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Data violates a documented invariant (non-finite sample, bad shape on input).
    #[error("validation error: {0}")]
    Validation(String),
    /// Degenerate dataset statistics (all-zero data, zero log-std spread).
    #[error("statistics error: {0}")]
    Statistics(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    /// Numerical failure during optimization (NaN loss or gradient).
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("incompatible version: {0}")]
    Version(String),
    /// A component broke an internal contract (e.g. shape drift inside the net).
    #[error("internal contract violation: {0}")]
    Internal(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
