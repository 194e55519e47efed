use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A malformed vocabulary, pattern, or mapping file.
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// A malformed sample record; `line` is 1-based.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("probability {value} for type index {index} is outside (0, 1)")]
    NumericDomain { index: usize, value: f64 },

    #[error("backend failure for prompt `{prompt}`: {message}")]
    Backend { prompt: String, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("vocabulary mismatch: expected hash {expected}, found {found}")]
    VocabMismatch { expected: String, found: String },

    #[error("type `{0}` is not in the type vocabulary")]
    UnknownType(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
