//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced by any pgen operation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path} is not valid UTF-8 (first invalid byte at offset {offset})")]
    InvalidUtf8 { path: PathBuf, offset: usize },

    #[error("corpus is empty after normalization")]
    EmptyCorpus,

    #[error("corpus of {length} characters is too short for window length {window}")]
    CorpusTooShort { length: usize, window: usize },

    #[error("character {ch:?} (U+{code:04X}) at position {position} is not in the vocabulary")]
    UnknownChar { ch: char, code: u32, position: usize },

    #[error("index {index} is out of range for vocabulary of size {vocab_size}")]
    IndexOutOfRange { index: usize, vocab_size: usize },

    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("invalid probability vector: {reason}")]
    InvalidDistribution { reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("seed text is empty")]
    EmptySeed,

    #[error("seed is shorter than the window and the space character used for padding is not in the vocabulary")]
    PadCharMissing,

    #[error("not a checkpoint file (bad magic bytes)")]
    NotACheckpoint,

    #[error("unsupported checkpoint format version {0}")]
    UnsupportedVersion(u8),

    #[error("checkpoint file is truncated: {0}")]
    TruncatedCheckpoint(String),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn unknown_char(ch: char, position: usize) -> Self {
        Error::UnknownChar {
            ch,
            code: ch as u32,
            position,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
