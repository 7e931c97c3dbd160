use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: bad model file, invalid parameters.
    #[error("validation error: {0}")]
    Validation(String),
    /// Mathematically invalid request, e.g. an unstable model.
    #[error("domain error: {0}")]
    Domain(String),
    /// A configured size cap would be exceeded.
    #[error("refused: {0}")]
    Cap(String),
    /// A denominator vanished.
    #[error("pole: {0}")]
    Pole(String),
    /// Two routes that must agree did not.
    #[error("internal consistency failure: {0}")]
    Internal(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Io(_) => 2,
            Error::Domain(_) | Error::Cap(_) | Error::Pole(_) | Error::Internal(_) => 3,
        }
    }
}
