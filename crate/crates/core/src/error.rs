//! Error type shared across the crate.

use crate::data::Split;

/// Crate-wide error type.
///
/// The variants map onto process exit codes in the CLI: input/config/parse
/// problems are user errors (exit 1), domain errors are numeric
/// precondition violations (exit 2), and invariant/label-access errors
/// indicate a bug in the calling code (exit 3).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("label access denied on {0} split")]
    LabelAccess(Split),

    #[error("invariant violation: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }

    /// CLI exit code for this error kind.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_) | Error::Config(_) | Error::Parse(_) | Error::Io(_) => 1,
            Error::Domain(_) => 2,
            Error::LabelAccess(_) | Error::Invariant(_) => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
