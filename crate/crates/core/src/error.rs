use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error("manifest entry '{id}': {message}")]
    ManifestEntry { id: String, message: String },

    #[error("duplicate id '{0}'")]
    DuplicateId(String),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("image '{id}' is {height}x{width}; minimum is {min}x{min}")]
    ImageTooSmall {
        id: String,
        height: usize,
        width: usize,
        min: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("provenance mismatch: {0}")]
    ProvenanceMismatch(String),

    #[error("feature payload holds {actual_bytes} bytes, expected {expected_records} records of dimension {dim} ({expected_bytes} bytes)")]
    PayloadSize {
        expected_records: usize,
        dim: usize,
        expected_bytes: usize,
        actual_bytes: usize,
    },

    #[error("unsupported operator '{op}' in node '{node}'")]
    UnsupportedOperator { op: String, node: String },

    #[error("malformed model: {0}")]
    Model(String),

    #[error("unknown layer '{name}' (available: {available})")]
    UnknownLayer { name: String, available: String },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("embedding diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("{0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(what: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            what: what.into(),
            message: message.to_string(),
        }
    }

    /// True for errors caused by caller-supplied arguments rather than data or I/O.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::InvalidArgument(_) | Error::UnknownLayer { .. })
    }
}
