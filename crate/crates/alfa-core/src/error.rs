//! Crate-level error type aggregating the per-module errors, with a coarse
//! classification used by callers (the CLI maps kinds to exit codes).

use thiserror::Error;

use crate::alfa::AlfaError;
use crate::belief::BeliefError;
use crate::centroid::CentroidError;
use crate::data::DataError;
use crate::eknn::EknnError;
use crate::ensemble::EnsembleError;
use crate::stats::StatsError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Eknn(#[from] EknnError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Centroid(#[from] CentroidError),
    #[error(transparent)]
    Alfa(#[from] AlfaError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse error class for process-level reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad configuration or invalid request.
    Config,
    /// Unreadable or malformed input data.
    Data,
    /// Numerically undefined or degenerate computation.
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::Data(_) | Error::Io(_) => ErrorKind::Data,
            Error::Alfa(AlfaError::InvalidConfig(_)) => ErrorKind::Config,
            Error::Eknn(EknnError::KLargerThanTrainingSet { .. })
            | Error::Eknn(EknnError::EmptyTrainingSet)
            | Error::Eknn(EknnError::InvalidParameter(_)) => ErrorKind::Config,
            Error::Ensemble(EnsembleError::EmptyTrainingSet)
            | Error::Ensemble(EnsembleError::InvalidParameter(_)) => ErrorKind::Config,
            Error::Stats(StatsError::LengthMismatch { .. })
            | Error::Stats(StatsError::TooFewSamples(_)) => ErrorKind::Config,
            _ => ErrorKind::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
