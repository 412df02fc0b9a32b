use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("point {index} at {point:?} lies outside the unit cube; normalize the cloud first")]
    NotNormalized { index: usize, point: [f64; 3] },

    #[error("normal estimation needs at least k={k} points but the cloud has {have}; lower k")]
    TooFewPoints { have: usize, k: usize },

    #[error("cell {0:?} holds no points")]
    EmptyCell([u32; 3]),

    #[error("cloud has no normals; run normal estimation first")]
    MissingNormals,

    #[error("cell {0:?} has no complexity metrics")]
    MissingMetrics([u32; 3]),

    #[error("no non-empty, non-degenerate cells to derive thresholds from")]
    NoEligibleCells,

    #[error("cell {0:?} has not been classified")]
    Unlabeled([u32; 3]),

    #[error("pyramid invariant violated: {0}")]
    Inconsistent(String),

    #[error("resolution mismatch: {left} vs {right}")]
    ResolutionMismatch { left: u32, right: u32 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("{0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::InvalidConfig(_)
                | Error::ResolutionMismatch { .. }
                | Error::DimensionMismatch(_)
                | Error::InvalidInput(_)
                | Error::TooFewPoints { .. }
        )
    }
}
