use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{path}:{line}: {message}")]
    MeshParse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("mesh has no triangles")]
    EmptyMesh,

    #[error("tracking lost: {0}")]
    TrackingLost(String),

    #[error("channel {channel} has zero variance")]
    ZeroVariance { channel: usize },

    #[error("dataset too small: {0}")]
    DatasetTooSmall(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    #[error("unreachable occlusion target {target}: {reason}")]
    OcclusionTarget { target: f64, reason: String },

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("refusing to overwrite existing output {0}")]
    OutputExists(PathBuf),

    #[error("png: {0}")]
    Png(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Creates `path` for writing; an existing file is never overwritten.
pub(crate) fn create_output(path: &std::path::Path) -> Result<std::fs::File> {
    std::fs::File::create_new(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::AlreadyExists {
            Error::OutputExists(path.to_path_buf())
        } else {
            Error::Io(e)
        }
    })
}
