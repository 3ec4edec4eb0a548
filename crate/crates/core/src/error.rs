use thiserror::Error;

/// Errors raised by the library. Each variant maps onto one CLI exit code.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    /// Malformed input text. `line` is 1-based.
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    /// An argument violates an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A materialization would exceed the configured tuple budget.
    #[error("capacity exceeded: {what} needs {required} tuples, budget is {budget}")]
    Capacity {
        what: String,
        required: u128,
        budget: u128,
    },

    /// The input is outside what an exhaustive method can handle.
    #[error("capability limit: {0}")]
    Capability(String),

    /// An internal consistency check failed.
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }

    pub(crate) fn capacity(what: impl Into<String>, required: u128, budget: u128) -> Self {
        Error::Capacity {
            what: what.into(),
            required,
            budget,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
