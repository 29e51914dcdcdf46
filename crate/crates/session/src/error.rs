use std::path::PathBuf;

use thiserror::Error;
use trade_core::TradeError;
use uuid::Uuid;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("invalid session config: {0}")]
    InvalidConfig(String),

    #[error("invalid response: {0}")]
    InvalidResponse(String),

    #[error("unknown session {0}")]
    NotFound(Uuid),

    /// The response names an offer that is no longer pending.
    #[error("stale offer token {got}; pending token is {pending:?}")]
    StaleToken { got: u64, pending: Option<u64> },

    #[error("session {0} has ended")]
    Ended(Uuid),

    #[error(transparent)]
    Trade(#[from] TradeError),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}:{line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, SessionError>;
