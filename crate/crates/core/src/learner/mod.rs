//! The parser contract and the bundled reference parser.
//!
//! Strategies only talk to a [`Parser`]: they register training SQL into its
//! prediction space, ask for per-example losses, run weighted SGD epochs, predict
//! SQL with a confidence, and snapshot/restore parameters. A neural parser that
//! factorises P(SQL | question, schema) over decoding actions plugs in by
//! implementing the same trait; its confidence may be the raw product of action
//! probabilities or a length-normalised variant.
//!
//! [`ReferenceParser`] classifies the question into a SQL skeleton with a
//! multinomial logistic model over hashed n-gram features and fills the skeleton's
//! slots from the question deterministically.

mod checkpoint;
mod features;
mod reference;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Instance, Schema};
use crate::sqlrep::{SqlError, SqlSkeleton};

pub use checkpoint::Checkpoint;
pub use features::{featurize, stem, FeatureHasher, SparseFeatures};
pub use reference::{fill_slots, ReferenceParser};

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("parser has an empty skeleton catalog")]
    NotTrained,
    #[error("skeleton `{0}` is not in the catalog")]
    UnknownSkeleton(String),
    #[error("instance `{0}` has no SQL to train on")]
    MissingSql(String),
    #[error("example weight {0} outside (0, 1]")]
    BadWeight(f64),
    #[error("non-finite {what} at step {step}")]
    NonFinite { what: &'static str, step: u64 },
    #[error("checkpoint rejected: {0}")]
    Integrity(String),
    #[error("instance `{id}`: {source}")]
    Sql {
        id: String,
        #[source]
        source: SqlError,
    },
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// How a loss term entered the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    /// Labelled instance, weight 1.
    Gold,
    /// Pseudo-labelled instance weighted by its confidence.
    Pseudo,
    /// Teacher pseudo label consumed by the student at weight 1.
    Distilled,
    /// Replayed memory instance, weight 1.
    Memory,
}

impl TermKind {
    pub const ALL: [TermKind; 4] = [TermKind::Gold, TermKind::Pseudo, TermKind::Distilled, TermKind::Memory];
}

/// One loss term: an instance with SQL, its schema, and its weight.
#[derive(Debug, Clone, Copy)]
pub struct WeightedExample<'a> {
    pub instance: &'a Instance,
    pub schema: &'a Schema,
    pub weight: f64,
    pub kind: TermKind,
}

impl<'a> WeightedExample<'a> {
    pub fn new(
        instance: &'a Instance,
        schema: &'a Schema,
        weight: f64,
        kind: TermKind,
    ) -> Result<Self, LearnerError> {
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(LearnerError::BadWeight(weight));
        }
        if instance.sql().is_none() {
            return Err(LearnerError::MissingSql(instance.id.clone()));
        }
        Ok(WeightedExample {
            instance,
            schema,
            weight,
            kind,
        })
    }

    /// Unit-weight term.
    pub fn unit(instance: &'a Instance, schema: &'a Schema, kind: TermKind) -> Result<Self, LearnerError> {
        Self::new(instance, schema, 1.0, kind)
    }

    pub fn sql(&self) -> &'a str {
        self.instance.sql().expect("checked at construction")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TermTally {
    pub count: usize,
    pub loss_sum: f64,
    pub weight_sum: f64,
}

/// Summary of one training pass. Losses are recorded before each example's update.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub mean_loss: f64,
    pub terms: BTreeMap<TermKind, TermTally>,
}

impl EpochReport {
    pub fn count(&self, kind: TermKind) -> usize {
        self.terms.get(&kind).map_or(0, |t| t.count)
    }

    pub fn total_terms(&self) -> usize {
        self.terms.values().map(|t| t.count).sum()
    }

    pub fn total_loss(&self) -> f64 {
        self.terms.values().map(|t| t.loss_sum).sum()
    }
}

/// A predicted SQL program.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub sql: String,
    /// Probability of the chosen skeleton, in (0, 1].
    pub confidence: f64,
    pub skeleton: SqlSkeleton,
}

pub trait Parser: Send + Sync {
    /// Add the skeletons of `examples` to the prediction space. Returns how many were new.
    fn register(&mut self, examples: &[WeightedExample<'_>]) -> Result<usize, LearnerError>;

    /// Weighted negative log-likelihood of one term.
    fn loss(&self, example: &WeightedExample<'_>) -> Result<f64, LearnerError>;

    /// One SGD pass in a seeded shuffled order.
    fn train_epoch(
        &mut self,
        examples: &[WeightedExample<'_>],
        lr: f64,
        seed: u64,
    ) -> Result<EpochReport, LearnerError>;

    fn predict(&self, nlq: &[String], schema: &Schema) -> Result<Prediction, LearnerError>;

    fn snapshot(&self) -> Checkpoint;

    fn restore(&mut self, checkpoint: &Checkpoint) -> Result<(), LearnerError>;

    /// Forget everything learned, keeping hyperparameters.
    fn reset(&mut self);

    /// Size of the prediction space.
    fn catalog_len(&self) -> usize;
}
