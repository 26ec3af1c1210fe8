use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("capacity error: requested {requested} statements, only {available} available")]
    Capacity { requested: usize, available: usize },

    #[error("argument error: {0}")]
    Argument(String),

    #[error("cannot negate {0:?}: no template matches")]
    Unnegatable(String),

    #[error("pairing error: orphaned or ambiguous pairs {0:?}")]
    Pairing(Vec<String>),

    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),

    #[error("input of {len} tokens exceeds context length {max}")]
    Length { len: usize, max: usize },

    #[error("convention error: {0}")]
    Convention(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("{}: size mismatch, expected {expected} bytes, found {actual}", path.display())]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("unsupported format version {found} (this build reads version {expected})")]
    Version { found: u32, expected: u32 },

    #[error("{}:{line}: malformed record: {msg}", path.display())]
    Malformed {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("row {row} ({id}): checksum mismatch, statements and matrix rows are misaligned")]
    Checksum { row: usize, id: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("training with seed {seed} failed: {source}")]
    Seeded {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("CCS restart {restart} failed: {source}")]
    Restart {
        restart: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
