use thiserror::Error;

/// Errors surfaced by the library.
///
/// The `Display` strings double as the stable error codes used in CSV
/// output and CLI messages.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LeadError {
    #[error("empty-dataset")]
    EmptyDataset,
    #[error("incompatible-model: {0}")]
    IncompatibleModel(String),
    #[error("malformed-blob: {0}")]
    MalformedBlob(String),
    #[error("no-peers")]
    NoPeers,
    #[error("lookup-failed")]
    LookupFailed,
    #[error("bootstrap-unreachable")]
    BootstrapUnreachable,
    #[error("incomplete-topology: {0}")]
    IncompleteTopology(String),
    #[error("corrupt-dataset: {0}")]
    CorruptDataset(String),
    #[error("invalid-config: {0}")]
    InvalidConfig(String),
    #[error("unknown config key `{0}`")]
    UnknownConfigKey(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for LeadError {
    fn from(e: std::io::Error) -> Self {
        LeadError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LeadError>;
