use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty vocabulary")]
    EmptyVocabulary,

    #[error("word index {index} out of range for vocabulary of size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("empty bag of words: {0}")]
    EmptyBag(&'static str),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("out of vocabulary: {0:?}")]
    Oov(String),

    #[error("non-finite value in {term} (epoch {epoch}, update {update})")]
    NonFinite {
        term: &'static str,
        epoch: usize,
        update: usize,
    },

    #[error("bad magic")]
    BadMagic,

    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),

    #[error("truncated model file: {0}")]
    Truncated(&'static str),

    #[error("malformed input at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
