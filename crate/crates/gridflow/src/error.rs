//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value; the message names the offending key.
    #[error("config error: {0}")]
    Config(String),

    /// Tensor or layer shapes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An action was applied to a state that does not allow it.
    #[error("illegal move: {0}")]
    IllegalMove(String),

    /// The state space is too large to enumerate in memory.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// A tape was replayed after the parameters it recorded were mutated.
    #[error("stale tape: parameters changed since the forward pass")]
    StaleTape,

    /// Training produced a non-finite value (loss, gradient, or flow).
    #[error("diverged: {0}")]
    Diverged(String),

    /// An operation was called outside its contract.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
