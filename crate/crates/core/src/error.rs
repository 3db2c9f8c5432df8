use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("coordinate ({row}, {col}) outside {rows}x{cols} matrix")]
    OutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("non-finite value encountered in {stage}")]
    NonFinite { stage: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("client {client}: {source}")]
    Client {
        client: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn non_finite(stage: impl Into<String>) -> Self {
        Error::NonFinite {
            stage: stage.into(),
        }
    }

    /// True when the root cause is numerical (non-finite state).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonFinite { .. } => true,
            Error::Client { source, .. } | Error::Round { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
