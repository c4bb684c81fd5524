use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("provenance violation: {0}")]
    Provenance(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("cycle skipped: {0}")]
    Skipped(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
