use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (shapes, ranges, counts).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A value computed on the tape (or elsewhere) left the finite range.
    #[error("numeric overflow at node {node} ({op})")]
    NumericOverflow { node: usize, op: &'static str },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }

    /// True for failures that come from arithmetic rather than from inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NumericOverflow { .. } | Error::Numeric(_))
    }
}

/// Shorthand for bailing with a contract violation.
macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::Error::Contract(format!($($arg)+)));
        }
    };
}
pub(crate) use ensure;
