use thiserror::Error;

/// Errors raised by the library. Non-convergence of a training run is not an
/// error; it is reported through [`crate::trainer::RunResult`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("index error: {0}")]
    Index(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("validation error: {0}")]
    Validation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(what: impl Into<String>) -> Result<T> {
    Err(Error::Shape(what.into()))
}
