use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown synset id `{0}`")]
    UnknownSynset(String),

    #[error("no is-a path between `{0}` and `{1}`")]
    NoPath(String, String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("invalid taxonomy: {0}")]
    InvalidTaxonomy(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("width mismatch: expected {expected}, got {actual}")]
    WidthMismatch { expected: usize, actual: usize },

    #[error("bad magic in {path}: expected {expected:?}")]
    BadMagic { path: PathBuf, expected: &'static str },

    #[error("truncated file {path}: {detail}")]
    Truncated { path: PathBuf, detail: String },

    #[error("index sidecar mismatch for {path}: {detail}")]
    IndexMismatch { path: PathBuf, detail: String },

    #[error("duplicate key `{0}`")]
    DuplicateKey(String),

    #[error("unknown key `{0}`")]
    UnknownKey(String),

    #[error("unknown {kind} label `{label}`")]
    UnknownLabel { kind: &'static str, label: String },

    #[error("class id {id} out of range for {kind} vocabulary of {size}")]
    ClassOutOfRange {
        kind: &'static str,
        id: usize,
        size: usize,
    },

    #[error("no stored {slot} regions for class {class}")]
    NoRegions { class: String, slot: &'static str },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("non-finite training loss at step {step} (t = {timesteps:?}, batch ids = {batch:?})")]
    Diverged {
        step: usize,
        timesteps: Vec<usize>,
        batch: Vec<usize>,
    },

    #[error("missing artifact {artifact}, produced by `{producer}`")]
    MissingDependency { artifact: PathBuf, producer: &'static str },

    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("output directory {0} is locked by another command")]
    Locked(PathBuf),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
