use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("loss node must hold a single element, found shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("graph node {node} references later node {input}")]
    Cycle { node: usize, input: usize },

    #[error("empty point set")]
    EmptySet,

    #[error("empty evaluation")]
    EmptyEvaluation,

    #[error("correlation needs at least two components per vector, got {0}")]
    TooFewComponents(usize),

    #[error("kernel produced negative squared feature distance {0}; kernel is not positive semi-definite")]
    NotPsd(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset has no loaded images; call load_idx first")]
    NotLoaded,

    #[error("bad IDX magic {found:#010x} in {} (expected {expected:#010x})", path.display())]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("truncated IDX file {}: needed {needed} bytes, found {found}", path.display())]
    Truncated {
        path: PathBuf,
        needed: usize,
        found: usize,
    },

    #[error("image/label count mismatch: {images} images, {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("non-finite {term} at step {step}")]
    NumericalAbort { step: usize, term: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
