//! Error type shared across the crate.

use std::fmt;

/// Crate-wide error. The variants map onto the CLI exit codes:
/// usage/config problems exit with 2, data problems with 3 and
/// numeric failures with 4.
#[derive(Debug)]
pub enum Error {
    /// Tensor/parameter dimension mismatch.
    Shape(String),
    /// A documented precondition was violated by the caller.
    Contract(String),
    /// Non-finite value or other numeric failure.
    Numeric(String),
    /// Malformed or inconsistent input data.
    Data(String),
    /// Invalid configuration, CLI usage or checkpoint format.
    Config(String),
    /// Underlying I/O failure.
    Io(std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Contract(_) | Error::Shape(_) => 2,
            Error::Data(_) | Error::Io(_) => 3,
            Error::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(msg) => write!(f, "shape error: {msg}"),
            Error::Contract(msg) => write!(f, "contract error: {msg}"),
            Error::Numeric(msg) => write!(f, "numeric error: {msg}"),
            Error::Data(msg) => write!(f, "data error: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Io(err) => write!(f, "io error: {err}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err)
    }
}
