use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate problem{}: {reason}", keypoint.map(|k| format!(" at keypoint {k}")).unwrap_or_default())]
    DegenerateProblem {
        keypoint: Option<usize>,
        reason: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("need at least 3 correspondences, got {0}")]
    TooFewCorrespondences(usize),

    #[error("degenerate correspondence geometry: {0}")]
    DegenerateGeometry(String),

    #[error("invalid object model: {0}")]
    InvalidModel(String),

    #[error("value outside domain: {0}")]
    Domain(String),

    #[error("degenerate scene: {0}")]
    DegenerateScene(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn degenerate(reason: impl Into<String>) -> Self {
        Error::DegenerateProblem {
            keypoint: None,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attaches a keypoint index to a `DegenerateProblem`; other variants pass through.
    pub fn at_keypoint(self, index: usize) -> Self {
        match self {
            Error::DegenerateProblem { reason, .. } => Error::DegenerateProblem {
                keypoint: Some(index),
                reason,
            },
            other => other,
        }
    }
}
