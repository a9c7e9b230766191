//! Schema distance, structure distance, their product, and the relevance score.
//!
//! All distances are Euclidean distances between binary hash vectors, i.e. the
//! square root of the number of differing bits.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Instance, Schema};
use crate::par::{self, ExecMode};
use crate::sqlrep::{
    schema_hash, struct_hash, HashVector, SchemaHashSource, SchemaVocabSnapshot, SqlError,
};

#[derive(Debug, Error, PartialEq)]
pub enum DistanceError {
    #[error("hash vectors come from different vocabularies or snapshots")]
    VocabMismatch,
    #[error("instance `{0}` has no SQL")]
    MissingSql(String),
    #[error("relevance needs a nonempty reference set")]
    EmptyReference,
    #[error("unknown database `{0}`")]
    UnknownDb(String),
    #[error("instance `{id}`: {source}")]
    Sql {
        id: String,
        #[source]
        source: SqlError,
    },
}

/// How the relevance score ω aggregates schema distances to the current task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelevanceMode {
    /// ω = min distance to the current unlabeled set; smallest ω is most relevant.
    #[default]
    DefaultMin,
    /// ω = max distance; largest ω is selected.
    LiteralMax,
}

/// An instance reduced to what the distances need.
#[derive(Debug, Clone, PartialEq)]
pub struct HashedInstance {
    pub id: String,
    pub schema: HashVector,
    pub structure: Option<HashVector>,
}

/// Hashes instances against one Ψ snapshot.
pub struct InstanceHasher<'a> {
    schemas: &'a BTreeMap<String, Schema>,
    vocab: SchemaVocabSnapshot,
    source: SchemaHashSource,
}

impl<'a> InstanceHasher<'a> {
    pub fn new(
        schemas: &'a BTreeMap<String, Schema>,
        vocab: SchemaVocabSnapshot,
        source: SchemaHashSource,
    ) -> Self {
        InstanceHasher {
            schemas,
            vocab,
            source,
        }
    }

    pub fn hash(&self, inst: &Instance) -> Result<HashedInstance, DistanceError> {
        let schema = self
            .schemas
            .get(&inst.db_id)
            .ok_or_else(|| DistanceError::UnknownDb(inst.db_id.clone()))?;
        let structure = match inst.sql() {
            Some(sql) => Some(struct_hash(sql).map_err(|source| DistanceError::Sql {
                id: inst.id.clone(),
                source,
            })?),
            None => None,
        };
        Ok(HashedInstance {
            id: inst.id.clone(),
            schema: schema_hash(inst, schema, &self.vocab, self.source),
            structure,
        })
    }

    pub fn hash_all(
        &self,
        mode: ExecMode,
        insts: &[Instance],
    ) -> Result<Vec<HashedInstance>, DistanceError> {
        par::try_map(mode, insts, |i| self.hash(i))
    }
}

fn euclid(a: &HashVector, b: &HashVector) -> Result<f64, DistanceError> {
    a.symmetric_difference(b)
        .map(|d| f64::from(d).sqrt())
        .ok_or(DistanceError::VocabMismatch)
}

/// Schema distance: Euclidean distance of the Ψ-hashes.
pub fn d_sch(a: &HashedInstance, b: &HashedInstance) -> Result<f64, DistanceError> {
    euclid(&a.schema, &b.schema)
}

/// Structure distance: Euclidean distance of the Φ-hashes. Both sides need SQL.
pub fn d_stru(a: &HashedInstance, b: &HashedInstance) -> Result<f64, DistanceError> {
    let sa = a
        .structure
        .as_ref()
        .ok_or_else(|| DistanceError::MissingSql(a.id.clone()))?;
    let sb = b
        .structure
        .as_ref()
        .ok_or_else(|| DistanceError::MissingSql(b.id.clone()))?;
    euclid(sa, sb)
}

/// Product of structure and schema distance.
pub fn d_combined(a: &HashedInstance, b: &HashedInstance) -> Result<f64, DistanceError> {
    Ok(d_stru(a, b)? * d_sch(a, b)?)
}

/// Relevance ω of `x` to the current task's unlabeled set `reference`.
pub fn relevance(
    x: &HashedInstance,
    reference: &[HashedInstance],
    mode: RelevanceMode,
) -> Result<f64, DistanceError> {
    if reference.is_empty() {
        return Err(DistanceError::EmptyReference);
    }
    let mut best = match mode {
        RelevanceMode::DefaultMin => f64::INFINITY,
        RelevanceMode::LiteralMax => f64::NEG_INFINITY,
    };
    for u in reference {
        let d = d_sch(u, x)?;
        best = match mode {
            RelevanceMode::DefaultMin => best.min(d),
            RelevanceMode::LiteralMax => best.max(d),
        };
    }
    Ok(best)
}

/// Memo of pairwise distances keyed by unordered id pairs. Stops inserting once
/// `capacity` entries are held; lookups keep working.
#[derive(Debug)]
pub struct DistanceCache {
    capacity: usize,
    map: Mutex<HashMap<(String, String), f64>>,
}

impl DistanceCache {
    pub fn new(capacity: usize) -> Self {
        DistanceCache {
            capacity,
            map: Mutex::new(HashMap::new()),
        }
    }

    fn key(a: &str, b: &str) -> (String, String) {
        if a <= b {
            (a.to_string(), b.to_string())
        } else {
            (b.to_string(), a.to_string())
        }
    }

    pub fn get_or_compute<F>(&self, a: &str, b: &str, f: F) -> Result<f64, DistanceError>
    where
        F: FnOnce() -> Result<f64, DistanceError>,
    {
        let key = Self::key(a, b);
        if let Some(&d) = self.map.lock().expect("cache poisoned").get(&key) {
            return Ok(d);
        }
        let d = f()?;
        let mut map = self.map.lock().expect("cache poisoned");
        if map.len() < self.capacity {
            map.insert(key, d);
        }
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
