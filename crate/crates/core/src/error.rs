use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised across the pipeline.
///
/// Variants are grouped by how a caller is expected to react: input and
/// format problems, configuration problems, and backend/transport failures.
/// [`Error::class`] exposes that grouping.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing credential: {0}")]
    Credential(String),

    #[error("backend error: {0}")]
    Backend(String),

    #[error("planning error in {scene}: {message}")]
    Planning {
        scene: String,
        message: String,
        transcript: Option<Box<crate::agents::ConversationTranscript>>,
    },

    #[error("generator contract violated: {0}")]
    Contract(String),

    #[error("silent operand: {0}")]
    Silent(String),
}

/// Coarse error class used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Config,
    Backend,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Credential(_) => ErrorClass::Config,
            Error::Backend(_) | Error::Contract(_) => ErrorClass::Backend,
            Error::Planning { .. } => ErrorClass::Backend,
            _ => ErrorClass::Input,
        }
    }
}
