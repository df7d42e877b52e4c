use thiserror::Error;

/// Errors surfaced by the planning toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Free space could not be sampled within the rejection budget.
    #[error("degenerate environment: {0}")]
    EnvironmentDegenerate(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("malformed problem file: {0}")]
    ProblemFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
