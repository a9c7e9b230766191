use thiserror::Error;

use crate::clustering::ClusterError;
use crate::corpus::CorpusError;
use crate::distance::DistanceError;
use crate::learner::LearnerError;
use crate::metrics::MetricsError;
use crate::sampling::SamplingError;
use crate::sqlrep::SqlError;
use crate::strategies::StrategyError;

/// Umbrella error for callers that drive several modules at once.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Sql(#[from] SqlError),
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
