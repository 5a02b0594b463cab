use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("instance is inconsistent: {0}")]
    InconsistentInstance(String),

    #[error("search exhausted after {nodes} nodes ({reason})")]
    Exhausted { nodes: u64, reason: String },

    #[error("out of range: {0}")]
    Range(String),

    #[error("no live equations left to guess from")]
    NothingToGuess,

    #[error("malformed instance file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn arg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
