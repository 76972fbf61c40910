//! Error taxonomy shared by the library and the CLI.
//!
//! The variants map one-to-one onto CLI exit codes: parameter and gate errors
//! are caller mistakes, capacity errors mean a requested exact path exceeds
//! its enumeration or window budget, numerical errors mean a quadrature or
//! series failed to converge to its target.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A model configuration rejected by the relevance criterion.
    #[error("gate rejection: {0}")]
    Gate(String),

    /// Exact path requested beyond its enumeration/window budget.
    #[error("capacity error: {0}")]
    Capacity(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
    pub fn gate(msg: impl Into<String>) -> Self {
        Error::Gate(msg.into())
    }
    pub fn capacity(msg: impl Into<String>) -> Self {
        Error::Capacity(msg.into())
    }
    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
