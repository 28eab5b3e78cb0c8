use thiserror::Error;

use crate::storage::RecordId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StorageError {
    #[error("record {0} not found")]
    NotFound(RecordId),
    #[error("payload is {got} bytes, table expects {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("invalid table config: {0}")]
    InvalidConfig(String),
    #[error("table of {records} records x {bytes} bytes exceeds capacity")]
    Capacity { records: usize, bytes: usize },
    #[error("unknown table {0}")]
    UnknownTable(u16),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Invalid(String),
}

impl ConfigError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        ConfigError::Invalid(msg.into())
    }
}

#[derive(Debug, Error)]
pub enum TxnError {
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("internal error: {0}")]
    Internal(&'static str),
    #[error(transparent)]
    Storage(#[from] StorageError),
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum LockError {
    #[error("lock upgrade on {0} is not supported; coalesce the estimate first")]
    Upgrade(RecordId),
    #[error("wait-die timestamps must be unique")]
    DuplicateTimestamp,
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("history line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("run measured no time")]
    EmptyRun,
    #[error("engine did not finish within {0:?}")]
    Watchdog(std::time::Duration),
}
