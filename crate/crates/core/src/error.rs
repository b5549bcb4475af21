//! Crate-wide error type with stable, greppable diagnostic classes.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("eligibility error: {0}")]
    Eligibility(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("argument error: {0}")]
    Argument(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("capacity error: {0}")]
    Capacity(String),
    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-greppable class token, used by the CLI exit diagnostics.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Range(_) => "range",
            Error::Eligibility(_) => "eligibility",
            Error::Shape(_) => "shape",
            Error::Numeric(_) => "numeric",
            Error::Argument(_) => "argument",
            Error::Parse(_) => "parse",
            Error::Validation(_) => "validation",
            Error::Capacity(_) => "capacity",
            Error::UndefinedCorrelation(_) => "correlation",
            Error::Data(_) => "data",
            Error::Io(_) => "io",
        }
    }
}
