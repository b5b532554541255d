//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid coordinate: {0}")]
    InvalidCoordinate(String),

    #[error("degenerate point pair: distance {distance:e} km is below the 1e-12 km threshold")]
    DegeneratePair { distance: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("covariance matrix {0:?} is singular or not positive definite")]
    SingularCovariance([[f64; 2]; 2]),

    #[error("log-likelihood is -inf: density underflows to zero at point index {index}")]
    ZeroDensity { index: usize },

    #[error("component {index} collapsed: responsibility mass {mass:e} is below 1e-12")]
    CollapsedComponent { index: usize, mass: f64 },

    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("infeasible fusion: observation {index} assigns zero mass to every grid cell")]
    InfeasibleFusion { index: usize },

    #[error("divergence is infinite: reference density is zero at a sampled point")]
    InfiniteDivergence,

    #[error("unsupported model format version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u64, supported: u64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
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

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
