use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate vector: L2 norm {norm:e} is at or below the normalization guard")]
    DegenerateVector { norm: f64 },

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("invalid modality index {0}")]
    InvalidModality(u32),

    #[error("invalid class index {class} for {classes} classes")]
    InvalidClass { class: usize, classes: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("dimension mismatch at line {line}: expected {expected}, got {got}")]
    DimensionMismatch { line: usize, expected: usize, got: usize },

    #[error("duplicate record id `{0}`")]
    DuplicateId(String),

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("missing pair for record `{0}`")]
    MissingPair(String),

    #[error("no caption (text record) available for class {0}")]
    MissingCaption(u32),

    #[error("invalid permutation {0:?}")]
    InvalidPermutation(Vec<usize>),

    #[error("dimension {dim} is not divisible into {blocks} blocks")]
    IndivisibleDimension { dim: usize, blocks: usize },

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("empty gallery")]
    EmptyGallery,

    #[error("invalid gallery: {0}")]
    InvalidGallery(String),

    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),

    #[error("checkpoint version mismatch: {0}")]
    VersionMismatch(String),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("i/o error on {path}: {source}")]
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
