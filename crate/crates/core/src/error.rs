//! Crate-wide error type, grouped by the categories the CLI maps to exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (schema violation, invariant violation, bad flag).
    #[error("config error: {0}")]
    Config(String),

    /// Filesystem / serialization failures.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Checkpoint file problems (bad magic, shape mismatch, missing tensor).
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Domain violations at runtime (non-finite state, terminal-state step, ...).
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(msg: impl Into<String>) -> Self {
        Error::Io(std::io::Error::other(msg.into()))
    }

    pub fn checkpoint(msg: impl Into<String>) -> Self {
        Error::Checkpoint(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        Error::Runtime(msg.into())
    }

    /// Process exit code category: config=2, io=3, checkpoint=4, runtime=5.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io(_) => 3,
            Error::Checkpoint(_) => 4,
            Error::Runtime(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
