use thiserror::Error;

/// Errors raised by every fallible operation in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated input: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("resource cap exceeded: {0}")]
    Resource(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error classes, used by front ends that map failures to exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Format,
    Shape,
    Resource,
    Domain,
    Other,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Format(_) | Error::Truncated { .. } => ErrorClass::Format,
            Error::Shape(_) => ErrorClass::Shape,
            Error::Resource(_) => ErrorClass::Resource,
            Error::Domain(_) | Error::NonFinite(_) | Error::Invalid(_) => ErrorClass::Domain,
            Error::Io(_) => ErrorClass::Other,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
