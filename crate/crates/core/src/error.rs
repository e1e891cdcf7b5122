use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    /// A per-column recovery program has an empty feasible set.
    #[error("infeasible column program: {0}")]
    Infeasible(String),

    #[error("decode failure: {0}")]
    DecodeFailure(String),

    /// No cognitive radio ever had enough measurements to take part.
    #[error("unrecoverable instance: {0}")]
    Unrecoverable(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid_input(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn invalid_config(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}
