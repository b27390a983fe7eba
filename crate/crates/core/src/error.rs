use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("invalid argument to {op}: {detail}")]
    InvalidArgument { op: &'static str, detail: String },

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("missing weight tensor `{0}`")]
    MissingWeight(String),

    #[error("weight tensor `{name}` has shape {found:?}, expected {expected:?}")]
    WeightShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("non-finite activation after layer {index} (`{layer}`)")]
    NonFiniteActivation { index: usize, layer: String },

    #[error("weight file: bad magic {0:?}")]
    BadMagic([u8; 4]),

    #[error("weight file: unsupported version {0}")]
    UnsupportedVersion(u16),

    #[error("weight file: CRC mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    CrcMismatch { stored: u32, computed: u32 },

    #[error("weight file: truncated while reading {0}")]
    Truncated(&'static str),

    #[error("weight file: tensor `{0}` contains NaN or infinity")]
    NonFinitePayload(String),

    #[error("weight file: {0}")]
    Format(String),

    #[error("weight store does not match graph `{graph}`: {summary}")]
    GraphMismatch { graph: String, summary: String },

    #[error("metadata: {0}")]
    Metadata(String),

    #[error("image {path}: {detail}")]
    Image { path: PathBuf, detail: String },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(op: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end. One code per error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Image { .. } => 3,
            Error::BadMagic(_)
            | Error::UnsupportedVersion(_)
            | Error::CrcMismatch { .. }
            | Error::Truncated(_)
            | Error::NonFinitePayload(_)
            | Error::Format(_)
            | Error::Metadata(_) => 4,
            Error::MissingWeight(_) | Error::WeightShape { .. } | Error::GraphMismatch { .. } => 5,
            Error::Dataset(_) => 6,
            Error::NonFinite(_) | Error::NonFiniteActivation { .. } => 7,
            Error::ShapeMismatch { .. } | Error::InvalidArgument { .. } => 8,
        }
    }
}
