use thiserror::Error;

/// Failure modes shared by every module.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// `partial` carries the best value reached before giving up, when one exists.
    #[error("numerical failure: {message}")]
    NumericalFailure {
        message: String,
        partial: Option<f64>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}

pub(crate) fn numerical<T>(msg: impl Into<String>, partial: Option<f64>) -> Result<T> {
    Err(Error::NumericalFailure {
        message: msg.into(),
        partial,
    })
}
