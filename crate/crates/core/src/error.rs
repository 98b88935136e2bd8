use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("vector norm {0:e} is below the normalization floor")]
    NearZeroNorm(f64),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("concept id {id} out of range (world has {count} concepts)")]
    BadConcept { id: usize, count: usize },

    #[error("unit id {unit} out of range for modality {modality} (vocabulary {vocab})")]
    OutOfVocab {
        unit: usize,
        modality: u8,
        vocab: usize,
    },

    #[error("modality mismatch: expected modality {expected}, got {actual}")]
    ModalityMismatch { expected: u8, actual: u8 },

    #[error("concept sequence has {actual} slots, template expects {expected}")]
    ArityMismatch { expected: usize, actual: usize },

    #[error("instance carries no latent concepts")]
    MissingLatent,

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("{0}")]
    InsufficientData(String),

    #[error("training diverged at iteration {iteration}: {what} is not finite")]
    Diverged { iteration: usize, what: &'static str },

    #[error("bad checkpoint magic {0:?}")]
    BadMagic(Vec<u8>),

    #[error("unsupported format version {found} (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("truncated payload: manifest needs {expected} bytes, file has {actual}")]
    TruncatedPayload { expected: usize, actual: usize },

    #[error("payload length {actual} disagrees with manifest ({expected} bytes)")]
    PayloadLength { expected: usize, actual: usize },

    #[error("{path}:{line}: {message}")]
    Schema {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}")]
    Format(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
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
