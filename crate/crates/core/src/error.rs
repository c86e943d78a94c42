use thiserror::Error;

/// Errors produced by every stage of the try-on pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("empty region: {0}")]
    EmptyRegion(String),
    #[error("malformed structure: {0}")]
    Structure(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code, used in the CLI's error JSON.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Parameter(_) => "parameter",
            Error::EmptyRegion(_) => "empty_region",
            Error::Structure(_) => "structure",
            Error::Validation(_) => "validation",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
