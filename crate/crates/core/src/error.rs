//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by construction, validation, and training.
#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Vector/matrix dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A type invariant was violated at construction or use.
    #[error("invariant violation: {0}")]
    Invariant(String),

    /// Training produced a non-finite loss.
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    /// A backward pass was fed a tape recorded against stale parameters.
    #[error("stale tape: network parameters changed since the forward pass")]
    StaleTape,

    /// Configuration file is missing a key or holds an unparsable value.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed data file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Checkpoint bytes do not match the expected layout.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
