use thiserror::Error;

use crate::bridge::BridgeError;
use crate::ingest::IngestError;
use crate::report::ReportError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the analyses.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),

    #[error(transparent)]
    Bridge(#[from] BridgeError),

    #[error(transparent)]
    Report(#[from] ReportError),

    #[error("unknown split `{0}`")]
    UnknownSplit(String),

    #[error("split `{0}` is empty")]
    EmptySplit(String),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("unknown instance `{0}`")]
    UnknownInstance(String),

    #[error("task mismatch: {0}")]
    TaskMismatch(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("{0}")]
    Degenerate(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParams(msg.into())
    }
}
