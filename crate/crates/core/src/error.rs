use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input ({record}): {message}")]
    Format { record: String, message: String },

    #[error("invalid parameter `{name}`: {message}")]
    InvalidParam { name: &'static str, message: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("forward cache is stale (cache version {cache}, parameters version {params})")]
    StaleCache { cache: u64, params: u64 },

    #[error("cluster {0} has no members")]
    EmptyCluster(usize),

    #[error("zero-norm vector in cosine similarity")]
    ZeroVector,

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("{0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn param(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParam { name, message: message.into() }
    }

    pub(crate) fn format(record: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format { record: record.into(), message: message.into() }
    }
}
