use std::path::PathBuf;

use fedhome_nn::NnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Nn(#[from] NnError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}, line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("client {client_id} has no samples")]
    EmptyDataset { client_id: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("class {class} has no samples")]
    EmptyClass { class: String },

    #[error("not enough windows in the pool:\n{0}")]
    Shortfall(String),

    #[error("client {client_id}: {source}")]
    Client {
        client_id: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{path}: {message}")]
    Toml { path: PathBuf, message: String },

    #[error("no sensor CSV files in {0}; create a dataset with `fedhome gen-data --out <dir>` and pass it with --data")]
    MissingData(PathBuf),

    #[error("{0}")]
    Missing(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
