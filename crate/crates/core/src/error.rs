//! Error type shared by every layer of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid arguments or parameter combinations.
    #[error("usage error: {0}")]
    Usage(String),

    /// A series, quadrature or other numeric procedure did not reach its tolerance.
    #[error("numeric evaluation failed: {0}")]
    Numeric(String),

    /// Cholesky factorization failed even after the jitter retry.
    #[error("factorization failed: {0}")]
    Factorization(String),

    /// A closed-form constant was requested outside the hypotheses it is derived under.
    #[error("unsupported hypothesis: {0}")]
    UnsupportedHypothesis(String),

    /// Several validation failures reported together.
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Process exit code for the command-line front end: usage = 2, numeric = 3, io = 4.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Invalid(_) | Error::Parse(_) | Error::UnsupportedHypothesis(_) => 2,
            Error::Numeric(_) | Error::Factorization(_) => 3,
            Error::Io(_) => 4,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => Error::Parse(format!("{other:?}")),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io(e.into())
        } else {
            Error::Parse(e.to_string())
        }
    }
}
