use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: String, found: String },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid weight context: {0}")]
    InvalidContext(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "gram cache needs {needed_bytes} bytes but the cap is {cap_bytes} bytes; \
         rerun with the cache disabled"
    )]
    CacheTooLarge { needed_bytes: u128, cap_bytes: u128 },

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn dimension(expected: impl ToString, found: impl ToString) -> Self {
        Error::Dimension {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }
}
