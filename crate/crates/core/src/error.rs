use thiserror::Error;

/// Errors produced by the mfDNN pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A file or byte buffer did not match its declared format.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// A computation produced a non-finite value or failed to converge.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn parse(offset: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: msg.into(),
        }
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
