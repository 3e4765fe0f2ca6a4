use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },
    #[error("bitstream truncated in segment {segment}")]
    Truncated { segment: usize },
    #[error("bitstream was produced by a different model (digest {found:016x}, expected {expected:016x})")]
    DigestMismatch { expected: u64, found: u64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format { what, detail: detail.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
