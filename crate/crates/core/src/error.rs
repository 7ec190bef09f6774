use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty point cloud ({0})")]
    EmptyCloud(String),

    #[error("degenerate viewpoint at frame {frame}: only {points} points captured")]
    DegenerateViewpoint { frame: usize, points: usize },

    #[error("degenerate alignment: {0}")]
    DegenerateAlignment(String),

    #[error("non-finite value at `{node}`")]
    NonFinite { node: String },

    #[error("non-finite loss in batch {batch} (anchor {anchor})")]
    NonFiniteLoss { batch: usize, anchor: usize },

    #[error("missing pairwise transform for anchor {anchor}, neighbor {neighbor}")]
    MissingPairwise { anchor: usize, neighbor: usize },

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("parse error in {source_name} line {line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
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

    pub(crate) fn parse(source_name: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            message: message.into(),
        }
    }
}
