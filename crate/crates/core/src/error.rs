use std::path::PathBuf;

use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch: {context} ({expected:?} vs {found:?})")]
    DimensionMismatch {
        context: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("buffer length {found} does not match {width}x{height}x{channels}")]
    BadBufferLength {
        width: usize,
        height: usize,
        channels: usize,
        found: usize,
    },
    #[error("empty foreground: {0}")]
    EmptyForeground(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("lut has {0} null entries; authored luts must be dense")]
    NullEntries(usize),
    #[error("every pair falls on null entries; mapping error is undefined")]
    NoValidPairs,
    #[error("gradient descent diverged at step {step}; reduce the step size")]
    Diverged { step: usize },
    #[error("frame of {width}x{height} is smaller than the {window}x{window} ssim window")]
    FrameTooSmall {
        width: usize,
        height: usize,
        window: usize,
    },
    #[error("malformed ranking #{index}: {reason}")]
    MalformedRanking { index: usize, reason: String },
    #[error("malformed sample: {0}")]
    MalformedSample(String),
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
