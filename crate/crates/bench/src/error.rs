use std::path::PathBuf;

use thiserror::Error;
use trade_core::TradeError;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Trade(#[from] TradeError),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },

    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, BenchError>;
