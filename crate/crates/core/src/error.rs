use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Variants are grouped by the caller-facing category returned from
/// [`Error::category`]; the command-line front end maps categories onto exit
/// codes.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, bounds, or hyperparameters that can never work.
    #[error("configuration error: {0}")]
    Config(String),

    /// An API called out of contract (empty sequence, foreign tape variable, ...).
    #[error("usage error: {0}")]
    Usage(String),

    #[error("audio is entirely silent; nothing to index")]
    EmptyAudio,

    #[error("degenerate audio: {0}")]
    DegenerateAudio(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("query is empty after stopword removal")]
    EmptyQuery,

    #[error("every caption was filtered out")]
    EmptyCaptionSet,

    /// Malformed or inconsistent input data (manifests, relevance maps, ...).
    #[error("data error: {0}")]
    Data(String),

    #[error("bad magic in {what}: expected {expected:?}, found {found:?}")]
    BadMagic {
        what: &'static str,
        expected: [u8; 4],
        found: [u8; 4],
    },

    #[error("unsupported {what} version {found}")]
    UnsupportedVersion { what: &'static str, found: u32 },

    #[error("truncated file: {0}")]
    TruncatedFile(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("wav error in {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse grouping of [`Error`] variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Data,
    Numeric,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::Usage(_) => ErrorCategory::Usage,
            Error::Numeric(_) => ErrorCategory::Numeric,
            _ => ErrorCategory::Data,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
