use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Inconsistent or invalid configuration.
    #[error("config error: {0}")]
    Config(String),
    /// Malformed numerical input (non-finite entries, shape mismatch).
    #[error("input error: {0}")]
    Input(String),
    #[error("spectral density is singular at theta = {0}")]
    Singularity(f64),
    #[error("unsupported frequency grid: {0}")]
    UnsupportedGrid(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
