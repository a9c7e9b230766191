//! Exemplar selection: prompt sampling for the teacher, review sampling for the
//! student, and the ablation baselines.
//!
//! Samplers work on [`HashedInstance`] slices and return indices into the pool they
//! were given, so callers keep ownership of the instances themselves.

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{kmedoids, topk, ClusterError, DistMatrix, KMedoidsConfig, Order};
use crate::distance::{d_combined, d_sch, d_stru, relevance, DistanceError, HashedInstance, RelevanceMode};
use crate::par::{self, ExecMode};
use crate::seed;

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("sampler needs a nonempty {0}")]
    EmptyInput(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Teacher memory size N.
    pub teacher_size: usize,
    /// Relevance pool size Ñ.
    pub pool_size: usize,
    /// Student memory size M per task.
    pub student_size: usize,
    pub relevance_mode: RelevanceMode,
}

impl SamplerConfig {
    /// Pool size defaults to three times the teacher memory.
    pub fn with_sizes(teacher_size: usize, student_size: usize) -> Self {
        SamplerConfig {
            teacher_size,
            pool_size: 3 * teacher_size,
            student_size,
            relevance_mode: RelevanceMode::default(),
        }
    }
}

/// Indices chosen from the input pool, plus anything worth surfacing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sample {
    pub indices: Vec<usize>,
    pub warnings: Vec<String>,
    /// Relevance scores of the whole past pool (prompt and schema-sim sampling only).
    pub scores: Vec<f64>,
    /// Indices of the relevance pool before clustering (prompt sampling only).
    pub pool: Vec<usize>,
}

fn warn(out: &mut Vec<String>, msg: String) {
    log::warn!("{msg}");
    out.push(msg);
}

fn medoids_under<F>(
    items: &[&HashedInstance],
    k: usize,
    mode: ExecMode,
    metric: F,
) -> Result<Vec<usize>, SamplingError>
where
    F: Fn(&HashedInstance, &HashedInstance) -> Result<f64, DistanceError> + Sync + Send,
{
    let m = DistMatrix::from_fn(items.len(), mode, |i, j| {
        metric(items[i], items[j]).map_err(SamplingError::from)
    })?;
    let cfg = KMedoidsConfig {
        mode,
        ..KMedoidsConfig::default()
    };
    Ok(kmedoids(&m, k, &cfg)?.medoids)
}

/// ω for every past instance against the current task's reference set.
pub fn relevance_scores(
    past: &[HashedInstance],
    current: &[HashedInstance],
    rel: RelevanceMode,
    mode: ExecMode,
) -> Result<Vec<f64>, SamplingError> {
    if current.is_empty() {
        return Err(SamplingError::EmptyInput("current-task reference set"));
    }
    Ok(par::try_map(mode, past, |x| relevance(x, current, rel))?)
}

fn relevance_order(rel: RelevanceMode) -> Order {
    match rel {
        RelevanceMode::DefaultMin => Order::Ascending,
        RelevanceMode::LiteralMax => Order::Descending,
    }
}

/// Prompt sampling: score the past pool by relevance to `current`, keep the top
/// `pool_size`, cluster that pool by structure distance into `teacher_size` clusters
/// and return the medoids. An empty past pool yields an empty sample.
pub fn prompt_sample(
    past: &[HashedInstance],
    current: &[HashedInstance],
    cfg: &SamplerConfig,
    mode: ExecMode,
) -> Result<Sample, SamplingError> {
    if past.is_empty() || cfg.teacher_size == 0 {
        return Ok(Sample::default());
    }
    let mut warnings = Vec::new();
    let scores = relevance_scores(past, current, cfg.relevance_mode, mode)?;
    let top = topk(&scores, cfg.pool_size.max(cfg.teacher_size), relevance_order(cfg.relevance_mode));
    if top.truncated {
        warn(
            &mut warnings,
            format!("relevance pool shrunk to the {} available past instances", past.len()),
        );
    }
    let pool = top.indices;
    let indices = if cfg.teacher_size >= pool.len() {
        pool.clone()
    } else {
        let items: Vec<&HashedInstance> = pool.iter().map(|&i| &past[i]).collect();
        medoids_under(&items, cfg.teacher_size, mode, d_stru)?
            .into_iter()
            .map(|local| pool[local])
            .collect()
    };
    Ok(Sample {
        indices,
        warnings,
        scores,
        pool,
    })
}

/// Review sampling: cluster the labelled-plus-pseudo pool by combined distance into
/// `size` clusters and return the medoids.
pub fn review_sample(
    pool: &[HashedInstance],
    size: usize,
    mode: ExecMode,
) -> Result<Sample, SamplingError> {
    cluster_sample(pool, size, mode, d_combined)
}

/// Ablation: cluster by schema distance only.
pub fn schema_clus_sample(
    pool: &[HashedInstance],
    size: usize,
    mode: ExecMode,
) -> Result<Sample, SamplingError> {
    cluster_sample(pool, size, mode, d_sch)
}

fn cluster_sample<F>(
    pool: &[HashedInstance],
    size: usize,
    mode: ExecMode,
    metric: F,
) -> Result<Sample, SamplingError>
where
    F: Fn(&HashedInstance, &HashedInstance) -> Result<f64, DistanceError> + Sync + Send,
{
    if pool.is_empty() {
        return Err(SamplingError::EmptyInput("pool"));
    }
    let mut warnings = Vec::new();
    if size == 0 {
        return Ok(Sample::default());
    }
    if size >= pool.len() {
        if size > pool.len() {
            warn(
                &mut warnings,
                format!("requested {size} exemplars from a pool of {}; keeping all", pool.len()),
            );
        }
        return Ok(Sample {
            indices: (0..pool.len()).collect(),
            warnings,
            ..Sample::default()
        });
    }
    let items: Vec<&HashedInstance> = pool.iter().collect();
    Ok(Sample {
        indices: medoids_under(&items, size, mode, metric)?,
        warnings,
        ..Sample::default()
    })
}

/// Ablation and Vanilla memory: `size` distinct pool positions drawn uniformly.
pub fn random_sample(pool_len: usize, size: usize, seed: u64) -> Vec<usize> {
    let size = size.min(pool_len);
    let mut rng = seed::rng(seed, "random-sample", 0);
    let mut out = index::sample(&mut rng, pool_len, size).into_vec();
    out.sort_unstable();
    out
}

/// Ablation: the `size` most relevant past instances, without clustering.
pub fn schema_sim_sample(
    past: &[HashedInstance],
    current: &[HashedInstance],
    size: usize,
    rel: RelevanceMode,
    mode: ExecMode,
) -> Result<Sample, SamplingError> {
    if past.is_empty() || size == 0 {
        return Ok(Sample::default());
    }
    let scores = relevance_scores(past, current, rel, mode)?;
    let top = topk(&scores, size, relevance_order(rel));
    Ok(Sample {
        pool: top.indices.clone(),
        indices: top.indices,
        scores,
        warnings: Vec::new(),
    })
}

/// Which sampler feeds the teacher memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherSampler {
    #[default]
    Prompt,
    Random,
    SchemaSim,
}

/// Which sampler builds the student's per-task memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudentSampler {
    #[default]
    Review,
    Random,
    SchemaClus,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sqlrep::{keyword_hash, HashVector, Keyword, VocabTag};
    use Keyword::*;

    fn hi(id: &str, schema_bits: &[usize], kws: &[Keyword]) -> HashedInstance {
        HashedInstance {
            id: id.into(),
            schema: HashVector::from_indices(VocabTag::Schema, 8, schema_bits.iter().copied()),
            structure: Some(keyword_hash(kws.iter().copied().collect())),
        }
    }

    #[test]
    fn empty_past_gives_empty_memory() {
        let u = [hi("u", &[0], &[Select])];
        let s = prompt_sample(&[], &u, &SamplerConfig::with_sizes(2, 2), ExecMode::Sequential).unwrap();
        assert!(s.indices.is_empty());
        assert!(schema_sim_sample(&[], &u, 3, RelevanceMode::DefaultMin, ExecMode::Sequential)
            .unwrap()
            .indices
            .is_empty());
    }

    #[test]
    fn full_pool_returns_everything() {
        let r: Vec<_> = (0..4).map(|i| hi(&format!("r{i}"), &[i], &[Select, From])).collect();
        let u = [hi("u", &[0], &[Select])];
        let cfg = SamplerConfig {
            teacher_size: 4,
            pool_size: 4,
            student_size: 1,
            relevance_mode: RelevanceMode::DefaultMin,
        };
        let s = prompt_sample(&r, &u, &cfg, ExecMode::Sequential).unwrap();
        assert_eq!(s.indices, vec![0, 1, 2, 3]);
    }

    #[test]
    fn oversized_pool_request_warns() {
        let r: Vec<_> = (0..3).map(|i| hi(&format!("r{i}"), &[i], &[Select, From])).collect();
        let u = [hi("u", &[0], &[Select])];
        let cfg = SamplerConfig::with_sizes(2, 1);
        let s = prompt_sample(&r, &u, &cfg, ExecMode::Sequential).unwrap();
        assert_eq!(s.warnings.len(), 1);
        assert_eq!(s.indices.len(), 2);
    }

    #[test]
    fn review_on_one_db_is_degenerate_but_deterministic() {
        let pool: Vec<_> = [&[Select, From][..], &[Select, From, Where], &[Select, From, Limit]]
            .iter()
            .enumerate()
            .map(|(i, k)| hi(&format!("p{i}"), &[0, 1], k))
            .collect();
        let a = review_sample(&pool, 2, ExecMode::Sequential).unwrap();
        let b = review_sample(&pool, 2, ExecMode::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.indices, vec![0, 1]);
    }

    #[test]
    fn review_identity_and_oversize() {
        let pool: Vec<_> = (0..3).map(|i| hi(&format!("p{i}"), &[i], &[Select])).collect();
        assert_eq!(review_sample(&pool, 3, ExecMode::Sequential).unwrap().indices, vec![0, 1, 2]);
        let over = review_sample(&pool, 5, ExecMode::Sequential).unwrap();
        assert_eq!(over.indices, vec![0, 1, 2]);
        assert_eq!(over.warnings.len(), 1);
        assert!(review_sample(&[], 1, ExecMode::Sequential).is_err());
    }

    #[test]
    fn schema_clus_one_medoid_per_db() {
        let pool = vec![
            hi("a1", &[0, 1], &[Select]),
            hi("a2", &[0, 1], &[Select, Where]),
            hi("b1", &[4, 5, 6], &[Select]),
            hi("b2", &[4, 5, 6], &[Select, Limit]),
        ];
        let s = schema_clus_sample(&pool, 2, ExecMode::Sequential).unwrap();
        assert_eq!(s.indices.len(), 2);
        assert!(s.indices[0] < 2 && s.indices[1] >= 2);
    }

    #[test]
    fn random_sample_properties() {
        assert_eq!(random_sample(10, 4, 9), random_sample(10, 4, 9));
        assert_eq!(random_sample(5, 5, 1), vec![0, 1, 2, 3, 4]);
        for s in 0..100 {
            let mut v = random_sample(20, 7, s);
            assert_eq!(v.len(), 7);
            v.dedup();
            assert_eq!(v.len(), 7);
        }
    }

    #[test]
    fn schema_sim_equals_prompt_when_pool_equals_memory() {
        let r = vec![
            hi("r0", &[0, 1], &[Select, From]),
            hi("r1", &[5, 6], &[Select, From, Where]),
            hi("r2", &[0, 2], &[Select, From, Limit]),
            hi("r3", &[0, 1], &[Select, From, GroupBy]),
        ];
        let u = vec![hi("u0", &[0, 1], &[])];
        let cfg = SamplerConfig {
            teacher_size: 2,
            pool_size: 2,
            student_size: 1,
            relevance_mode: RelevanceMode::DefaultMin,
        };
        let p = prompt_sample(&r, &u, &cfg, ExecMode::Sequential).unwrap();
        let s = schema_sim_sample(&r, &u, 2, RelevanceMode::DefaultMin, ExecMode::Sequential).unwrap();
        assert_eq!(p.indices, s.indices);
        assert_eq!(s.indices, vec![0, 3]);
    }
}
