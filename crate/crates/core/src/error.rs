use thiserror::Error;

/// Errors surfaced by the toolkit.
#[derive(Debug, Error)]
pub enum OccError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("ingestion error at {location}: {message}")]
    Ingestion { location: String, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, OccError>;

impl OccError {
    pub fn dimension(msg: impl Into<String>) -> Self {
        OccError::Dimension(msg.into())
    }
    pub fn validation(msg: impl Into<String>) -> Self {
        OccError::Validation(msg.into())
    }
}
