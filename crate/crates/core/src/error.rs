use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate passage id {id:?} on line {line}")]
    DuplicateId { id: String, line: usize },

    #[error("line {line}: {what} must not be empty")]
    EmptyField { line: usize, what: &'static str },

    #[error("bad magic bytes: expected \"DREM\", found {found:?}")]
    BadMagic { found: Vec<u8> },

    #[error("unsupported embedding file version {0} (expected 1)")]
    UnsupportedVersion(u32),

    #[error("payload size mismatch: expected {expected} bytes, found {actual}")]
    PayloadLength { expected: u64, actual: u64 },

    #[error("embedding dimension must be at least 1")]
    ZeroDim,

    #[error("embedding row {row} has norm {norm} but the file is flagged normalized")]
    NotUnitNorm { row: usize, norm: f64 },

    #[error("passage count {passages} does not match embedding rows {rows}")]
    CountMismatch { passages: usize, rows: usize },

    #[error("row {row} has zero norm")]
    ZeroNorm { row: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("collection embeddings are not unit-normalized")]
    NotNormalized,

    #[error("{0}")]
    InvalidArgument(String),

    #[error("requested {requested} rows but only {available} are eligible")]
    NotEnoughRows { requested: usize, available: usize },

    #[error("unbalanced dataset: {positives} positives vs {negatives} negatives")]
    Imbalance { positives: usize, negatives: usize },

    #[error("passage row {row} carries both labels")]
    LabelCollision { row: usize },

    #[error("duplicate class name {0:?}")]
    DuplicateClass(String),

    #[error("class {0:?} has no examples")]
    EmptyClass(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("unsupported model version {0} (expected 1)")]
    ModelVersion(u32),

    #[error("malformed model: {0}")]
    MalformedModel(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::NonFiniteLoss { .. })
    }
}
