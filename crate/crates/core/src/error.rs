use std::path::PathBuf;

use crate::id::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("content {0} has no data to hash")]
    MissingData(NodeId),
    #[error("invalid directory entry name {0:?}")]
    InvalidEntryName(String),
    #[error("invalid node: {0}")]
    InvalidNode(String),
    #[error("{from} references missing node {to}")]
    DanglingReference { from: String, to: NodeId },
    #[error("line {line}: reference to undefined node {to}")]
    DanglingAtLine { line: usize, to: NodeId },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("store is read-only")]
    ReadOnly,
    #[error("store at {0} is locked by another handle")]
    Locked(PathBuf),
    #[error("store at {0} already exists")]
    AlreadyExists(PathBuf),
    #[error("corrupt store manifest: {0}")]
    CorruptManifest(String),
    #[error("unknown keyspace {0:?}")]
    UnknownKeyspace(String),
    #[error("storage failure: {0}")]
    Storage(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("decode failure: {0}")]
    Decode(String),
    #[error("no repository at {0}")]
    RepoNotFound(PathBuf),
    #[error("unsupported object: {0}")]
    UnsupportedObject(String),
    #[error("revision {revision} at t={timestamp} precedes already processed t={high_water}")]
    ClockRegression {
        revision: NodeId,
        timestamp: i64,
        high_water: i64,
    },
    #[error("model statistics come from different corpora")]
    MismatchedCorpus,
    #[error("insufficient data: need {needed}, have {have}")]
    InsufficientData { needed: usize, have: usize },
    #[error("no visit journal in store")]
    MissingVisitJournal,
    #[error("sampled contents carry no data bytes")]
    NoContentData,
    #[error("index for model {0} has not been built")]
    IndexNotBuilt(&'static str),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

macro_rules! storage_error {
    ($($t:ty),*) => {$(
        impl From<$t> for Error {
            fn from(e: $t) -> Self {
                Error::Storage(e.to_string())
            }
        }
    )*};
}

storage_error!(
    redb::Error,
    redb::TransactionError,
    redb::TableError,
    redb::StorageError,
    redb::CommitError
);

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Decode(e.to_string())
    }
}
