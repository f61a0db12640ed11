use std::io;

use thiserror::Error;

use crate::link::ProtocolError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates an operation's precondition.
    #[error("invalid parameter: {0}")]
    Param(String),

    /// A file or container did not match its declared layout.
    #[error("format error: {0}")]
    Format(String),

    #[error("protocol error: {0}")]
    Protocol(#[from] ProtocolError),

    #[error("template error: {0}")]
    Template(String),

    #[error("correlation undefined: {0}")]
    Correlation(String),

    #[error("link error: {0}")]
    Link(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// True for errors caused by bad input values rather than I/O or the wire.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Param(_) | Error::Template(_) | Error::Correlation(_)
        )
    }
}
