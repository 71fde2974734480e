use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("divergence undefined: {0}")]
    Divergence(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("not a run directory: {0}")]
    NotARun(String),

    #[error("corrupted run payload `{name}`: expected digest {expected}, found {found}")]
    Corruption {
        name: String,
        expected: String,
        found: String,
    },

    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
