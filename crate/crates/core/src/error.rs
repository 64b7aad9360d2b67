use std::path::PathBuf;

use thiserror::Error;

use crate::network::LayerGraph;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("activation pattern does not match the network layout")]
    PatternShape,

    #[error("cannot normalize a zero output vector")]
    ZeroOutput,

    #[error("path endpoints are identical")]
    DegeneratePath,

    #[error("non-finite value encountered: {0}")]
    NonFinite(&'static str),

    #[error("path walk exceeded the node cap of {cap}")]
    NodeCap { cap: usize },

    #[error("segment pattern drift could not be resolved near t = {t}")]
    Drift { t: f64 },

    #[error("finite-difference stencil at t = {t} straddles a node")]
    StraddlesNode { t: f64 },

    #[error("index {index} out of range (limit {limit})")]
    OutOfRange { index: usize, limit: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged at step {step}")]
    Diverged {
        step: usize,
        last_good: Box<LayerGraph>,
    },

    #[error("{}: bad magic number {found:#010x} (expected {expected:#010x})", path.display())]
    BadMagic {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("{}: truncated file ({detail})", path.display())]
    Truncated { path: PathBuf, detail: String },

    #[error("sample count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("{}: malformed data ({detail})", path.display())]
    Malformed { path: PathBuf, detail: String },

    #[error("i/o error on {}: {source}", path.display())]
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

    /// True for failures caused by floating-point trouble rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::NodeCap { .. }
                | Error::Drift { .. }
                | Error::Diverged { .. }
                | Error::ZeroOutput
        )
    }

    /// True for failures while reading a dataset file.
    pub fn is_data(&self) -> bool {
        matches!(
            self,
            Error::BadMagic { .. }
                | Error::Truncated { .. }
                | Error::CountMismatch { .. }
                | Error::Malformed { .. }
                | Error::Io { .. }
        )
    }
}
