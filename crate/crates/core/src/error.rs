use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed encoding vector: {0}")]
    MalformedVector(String),

    #[error("invalid gate-block: {0}")]
    InvalidBlock(String),

    #[error("invalid library spec: {0}")]
    InvalidSpec(String),

    #[error("library/graph too large: {count} items exceeds the configured limit of {limit}")]
    ResourceLimit { count: u128, limit: u128 },

    #[error("library spec mismatch: {0}")]
    SpecMismatch(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("index {index} out of range (size {size})")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("node {0} has no outgoing edges")]
    DeadEnd(usize),

    #[error("invalid path: edge {from} -> {to} is not in the graph")]
    InvalidPath { from: usize, to: usize },

    #[error("feature vector is all zero")]
    ZeroVector,

    #[error("{len} features do not fit into {capacity} amplitudes")]
    Overflow { len: usize, capacity: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("partition `{0}` is empty")]
    EmptyPartition(&'static str),

    #[error("insufficient samples: requested {requested}, available {available}")]
    InsufficientSamples { requested: usize, available: usize },

    #[error("{path}: {message}")]
    Format { path: String, message: String },

    #[error("bad IDX magic number {found:#010x} (expected {expected:#010x})")]
    BadMagic { found: u32, expected: u32 },

    #[error("truncated file: need {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },

    #[error("label file has {labels} entries but image file has {images}")]
    LabelMismatch { labels: usize, images: usize },

    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("row {row}: unknown diagnosis `{value}`")]
    UnknownDiagnosis { row: usize, value: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cut {cut} out of range for a sequence of length {len}")]
    CutOutOfRange { cut: usize, len: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
