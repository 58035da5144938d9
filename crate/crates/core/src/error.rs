use thiserror::Error;

use crate::anomaly::AnomalyError;
use crate::artifact::ArtifactError;
use crate::embedding::EmbeddingError;
use crate::havok::HavokError;
use crate::metrics::MetricsError;
use crate::sindy::SindyError;
use crate::stream::StreamError;
use crate::synth::SynthError;
use crate::timeseries_io::FrameError;

/// Crate-level error aggregating the module errors.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Havok(#[from] HavokError),
    #[error(transparent)]
    Anomaly(#[from] AnomalyError),
    #[error(transparent)]
    Sindy(#[from] SindyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
    Diverged,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Config => 2,
            Self::Data => 3,
            Self::Numerical => 4,
            Self::Diverged => 5,
        }
    }
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Self::Config(_) => ErrorKind::Config,
            Self::Synth(_) => ErrorKind::Config,
            Self::Anomaly(AnomalyError::InvalidConfig(_)) => ErrorKind::Config,
            Self::Embedding(EmbeddingError::NumericalFailure(_)) => ErrorKind::Numerical,
            Self::Havok(HavokError::SingularRegression { .. } | HavokError::NonFiniteState { .. }) => {
                ErrorKind::Numerical
            }
            Self::Sindy(SindyError::Diverged { .. }) => ErrorKind::Diverged,
            Self::Sindy(SindyError::Numerical(_)) => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
