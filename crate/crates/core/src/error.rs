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
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("truncated WAV data: expected {expected} samples, found {found}")]
    TruncatedData { expected: usize, found: usize },
    #[error("invalid audio buffer: {0}")]
    InvalidBuffer(String),
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("invalid chirp: {0}")]
    InvalidChirp(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("zero signal power in {0}")]
    ZeroPower(&'static str),
    #[error("loss became NaN at epoch {epoch}")]
    NanLoss { epoch: usize },
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("malformed container: {0}")]
    Container(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
