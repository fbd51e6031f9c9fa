use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("channel {channel} has a single pixel; variance is undefined")]
    DegenerateVariance { channel: usize },

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("{path}: {reason}")]
    Io { path: PathBuf, reason: String },

    #[error("too few clusters: requested {requested} yields a {n_w}x{n_h} grid")]
    TooFewClusters { requested: usize, n_w: usize, n_h: usize },

    #[error("too many clusters: requested {requested} but the image has {pixels} pixels")]
    TooManyClusters { requested: usize, pixels: usize },

    #[error("no threshold: input has fewer than two distinct values")]
    NoThreshold,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Io {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
