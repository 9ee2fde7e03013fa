use thiserror::Error;

/// Errors raised by the space, operator and norm routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{what} index {} out of range (valid: 1..={len})", .index + 1)]
    Range {
        what: &'static str,
        /// Zero-based index as passed to the API; the message reports it one-based.
        index: usize,
        len: usize,
    },
    #[error("wrong exponent for this method: {0}")]
    Dispatch(String),
    #[error("size limit exceeded: {0}")]
    SizeLimit(String),
    #[error("invalid solver config: {0}")]
    Config(String),
    #[error("{field}: {message}")]
    Parse { field: String, message: String },
}

impl Error {
    pub(crate) fn range(what: &'static str, index: usize, len: usize) -> Self {
        Error::Range { what, index, len }
    }

    pub(crate) fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
