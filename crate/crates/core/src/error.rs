use thiserror::Error;

use crate::allocation::AllocationError;
use crate::annealer::ConfigError;
use crate::frame::FrameError;
use crate::oracle::OracleError;
use crate::partition::PartitionError;
use crate::seeding::SeedingError;
use crate::state::StateError;
use crate::tuner::TuneError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-level error. Each module has its own error type; this wraps them so
/// pipelines spanning several modules can use `?` throughout.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Allocation(#[from] AllocationError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Tune(#[from] TuneError),
    #[error(transparent)]
    Seeding(#[from] SeedingError),
    #[error("k-means: {0}")]
    KMeans(#[from] crate::kmeans::KMeansError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
