use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum SncmError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("structural error: {0}")]
    Structure(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("non-finite {component} at iteration {iteration}")]
    NonFiniteState { iteration: usize, component: String },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SncmError>;

impl SncmError {
    pub fn domain(msg: impl Into<String>) -> Self {
        SncmError::Domain(msg.into())
    }

    pub fn dimension(msg: impl Into<String>) -> Self {
        SncmError::Dimension(msg.into())
    }

    pub fn structure(msg: impl Into<String>) -> Self {
        SncmError::Structure(msg.into())
    }
}
