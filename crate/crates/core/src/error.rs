use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (shapes, ranges, names).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{path}:{line}: corrupt file: {reason}")]
    CorruptFile { path: PathBuf, line: u64, reason: String },

    #[error("{path}:{line}: unknown gesture label {label:?} (valid labels: {valid})")]
    UnknownLabel {
        path: PathBuf,
        line: u64,
        label: String,
        valid: String,
    },

    #[error("event {label} [{start_ms}, {end_ms}] selects no samples")]
    EmptySegment { label: String, start_ms: i64, end_ms: i64 },

    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("shape mismatch for {array}: expected {expected}, found {found}")]
    ShapeMismatch {
        array: String,
        expected: String,
        found: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
