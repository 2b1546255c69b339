use std::path::PathBuf;

use crate::tensor::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shapes {lhs} and {rhs} are not compatible")]
    ShapeMismatch { op: &'static str, lhs: Shape, rhs: Shape },
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid axis {0} (expected 0..4)")]
    InvalidAxis(usize),
    #[error("backward requires a single-element loss, got shape {0}")]
    NotScalar(Shape),
    #[error("backward already ran on this tape")]
    BackwardTwice,
    #[error("conv: {0}")]
    Conv(String),
    #[error("{op}: spatial dims {h}x{w} must be {rule}")]
    Spatial {
        op: &'static str,
        h: usize,
        w: usize,
        rule: &'static str,
    },
    #[error("{op}: channel count {channels} must be even")]
    OddChannels { op: &'static str, channels: usize },
    #[error("image {h}x{w} is smaller than the required {min}x{min}")]
    ImageTooSmall { h: usize, w: usize, min: usize },
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("missing parameter `{0}`")]
    MissingParameter(String),
    #[error("missing gradient for parameter `{0}`")]
    MissingGradient(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),
    #[error("config: {0}")]
    Config(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("gradient check failed: {0}")]
    GradCheck(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Short machine-readable tag used by the CLI's failure line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. } | Error::InvalidShape(_) | Error::InvalidAxis(_) => "shape",
            Error::NotScalar(_) | Error::BackwardTwice => "autodiff",
            Error::Conv(_) => "conv",
            Error::Spatial { .. } | Error::OddChannels { .. } | Error::ImageTooSmall { .. } => "shape",
            Error::OutOfRange(_) => "range",
            Error::MissingParameter(_) | Error::MissingGradient(_) => "parameter",
            Error::NonFinite(_) => "non_finite",
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::Checkpoint(_) => "checkpoint",
            Error::Incompatible(_) => "incompatible",
            Error::Config(_) => "config",
            Error::Dataset(_) => "dataset",
            Error::GradCheck(_) => "gradcheck",
        }
    }
}
