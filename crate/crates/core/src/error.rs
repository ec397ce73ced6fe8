use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// [`Error::class`] groups variants into the coarse categories the command
/// line maps onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch in {dim}: {detail}")]
    Shape {
        op: &'static str,
        dim: &'static str,
        detail: String,
    },

    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },

    #[error("backward called on a released graph; run a new forward pass first")]
    GraphReleased,

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },

    #[error("parameter `{name}` has no gradient")]
    MissingGrad { name: String },

    #[error("parameter `{name}` is not present")]
    MissingParam { name: String },

    #[error("duplicate parameter name `{name}`")]
    DuplicateParam { name: String },

    #[error("attention over {q} locations needs {need} score entries, budget is {budget}")]
    AttentionBudget { q: usize, need: usize, budget: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("pixel value {value} exceeds {bits}-bit range in {context}")]
    PixelRange {
        value: u32,
        bits: u8,
        context: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode image {path}: {msg}")]
    ImageFormat { path: PathBuf, msg: String },

    #[error("checkpoint version mismatch: {0}")]
    VersionMismatch(String),

    #[error("checkpoint truncated while reading {what}")]
    Truncated { what: String },

    #[error("checkpoint tensor `{name}` has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("training diverged at step {step}: {reason}")]
    Divergence { step: usize, reason: String },
}

/// Coarse error category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Divergence,
    Io,
    Format,
}

impl Error {
    pub fn shape(op: &'static str, dim: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            dim,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) => ErrorClass::Usage,
            Error::Divergence { .. } | Error::NonFinite { .. } => ErrorClass::Divergence,
            Error::Io { .. } | Error::Dataset(_) => ErrorClass::Io,
            _ => ErrorClass::Format,
        }
    }
}
