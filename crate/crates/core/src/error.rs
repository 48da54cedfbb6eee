use thiserror::Error;

/// Crate-wide error type.
///
/// `Config` carries the offending field path so front-ends can surface it
/// verbatim; `Domain` marks precondition violations of individual
/// operations; `Scenario` marks inconsistencies that only appear when the
/// pieces are wired together (e.g. an empty choice set).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("scenario error: {0}")]
    Scenario(String),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }

    pub fn scenario(message: impl Into<String>) -> Self {
        Error::Scenario(message.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
