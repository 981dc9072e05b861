//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by signal processing, channel simulation and training.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The input is structurally valid but degenerate (e.g. all-zero signal
    /// passed to a power normalization).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Training produced a non-finite loss.
    #[error("training diverged: {0}")]
    Diverged(String),

    /// Configuration file or CLI usage problem.
    #[error("config error: {0}")]
    Config(String),

    /// Checkpoint container is corrupt or belongs to a different config.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateInput(msg.into())
    }
}
