//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("cloth lost: no visible vertices under the current camera")]
    LostCloth,

    #[error("simulation unstable even with the pseudo-action disabled (step {step})")]
    Unstable { step: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    /// Wraps an I/O error with the path it happened on.
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Wraps a parse failure with the file it happened in.
    pub fn parse(path: impl AsRef<std::path::Path>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            message: message.into(),
        }
    }

    /// Stable process exit code for the CLI: validation problems, I/O
    /// problems, and runtime failures are distinguishable by scripts.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParam(_)
            | Error::DimensionMismatch { .. }
            | Error::EmptyInput(_)
            | Error::NonFinite(_) => 3,
            Error::Io { .. } | Error::Parse { .. } => 4,
            Error::LostCloth | Error::Unstable { .. } => 5,
        }
    }

    /// Short machine-readable error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::EmptyInput(_) => "empty_input",
            Error::InvalidParam(_) => "invalid_param",
            Error::LostCloth => "lost_cloth",
            Error::Unstable { .. } => "unstable",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
        }
    }
}
