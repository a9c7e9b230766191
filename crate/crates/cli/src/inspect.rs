//! `stats` and `sample-debug`: look at a stream and at what the samplers pick.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use anyhow::bail;
use sqlstream::corpus::{stream_stats, Instance, TaskStream};
use sqlstream::distance::{d_combined, d_stru, HashedInstance, InstanceHasher};
use sqlstream::sampling::{prompt_sample, review_sample};
use sqlstream::sqlrep::{skeletonize, SchemaVocab};
use sqlstream::strategies::StrategyConfig;

use crate::config::UsageError;

fn skeleton_of(stream: &TaskStream, inst: &Instance) -> Option<String> {
    let schema = stream.schema(&inst.db_id)?;
    skeletonize(inst.sql()?, schema).ok().map(|s| s.to_string())
}

/// Per-task sizes, database counts and skeleton overlap with earlier tasks.
pub fn stats(stream: &TaskStream) -> String {
    let mut out = format!(
        "{:>4} {:>8} {:>10} {:>6} {:>6} {:>10} {:>4} {:>10} {:>10}\n",
        "task", "labeled", "unlabeled", "valid", "test", "zero_shot", "dbs", "skeletons", "seen_before"
    );
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for (t, st) in stream.tasks.iter().zip(stream_stats(stream)) {
        let sks: BTreeSet<String> = t.labeled.iter().chain(&t.test).filter_map(|i| skeleton_of(stream, i)).collect();
        let shared = sks.intersection(&seen).count();
        writeln!(out, "{st} {:>4} {:>10} {:>10}", t.dbs.len(), sks.len(), shared).unwrap();
        seen.extend(sks);
    }
    out
}

fn line(inst: &Instance) -> String {
    format!("{} [{}] {}", inst.id, inst.db_id, inst.sql().unwrap_or("-"))
}

/// Nearest other chosen exemplar under `d`, for a quick look at diversity.
fn nearest<F>(chosen: &[&HashedInstance], i: usize, d: F) -> anyhow::Result<f64>
where
    F: Fn(&HashedInstance, &HashedInstance) -> Result<f64, sqlstream::distance::DistanceError>,
{
    let mut best = f64::INFINITY;
    for (j, other) in chosen.iter().enumerate() {
        if j != i {
            best = best.min(d(chosen[i], other)?);
        }
    }
    Ok(best)
}

/// Run prompt sampling for `task` over the gold labels of earlier tasks, and review
/// sampling over the task's own labelled set, printing the exemplars chosen.
pub fn sample_debug(stream: &TaskStream, cfg: &StrategyConfig, task: usize) -> anyhow::Result<String> {
    if task == 0 || task > stream.len() {
        bail!(UsageError(format!("--task must be in 1..={}", stream.len())));
    }
    let mut vocab = SchemaVocab::new();
    for t in &stream.tasks[..task] {
        for db in &t.dbs {
            if let Some(s) = stream.schema(db) {
                vocab.extend_with_schema(s);
            }
        }
    }
    let hasher = InstanceHasher::new(&stream.schemas, vocab.snapshot(), cfg.schema_hash_source);
    let t = stream.task(task);
    let sc = cfg.sampler_config(t.labeled.len() + t.unlabeled.len());
    let mut out = String::new();

    let past: Vec<Instance> = stream.tasks[..task - 1].iter().flat_map(|p| p.labeled.iter().cloned()).collect();
    let reference = if t.unlabeled.is_empty() { &t.labeled } else { &t.unlabeled };
    writeln!(
        out,
        "prompt sampling for task {task}: past pool {} (gold only), reference {}, N = {}, pool = {}",
        past.len(),
        reference.len(),
        sc.teacher_size,
        sc.pool_size
    )?;
    if past.is_empty() {
        writeln!(out, "  (no earlier tasks; teacher memory is empty)")?;
    } else {
        let past_h = hasher.hash_all(cfg.exec, &past)?;
        let cur_h = hasher.hash_all(cfg.exec, reference)?;
        let s = prompt_sample(&past_h, &cur_h, &sc, cfg.exec)?;
        for w in &s.warnings {
            writeln!(out, "  warning: {w}")?;
        }
        let chosen: Vec<&HashedInstance> = s.indices.iter().map(|&i| &past_h[i]).collect();
        for (n, &i) in s.indices.iter().enumerate() {
            writeln!(
                out,
                "  omega={:.3} nearest_stru={:.3} {}",
                s.scores[i],
                nearest(&chosen, n, d_stru)?,
                line(&past[i])
            )?;
        }
    }

    let m = cfg.memory_size(t.labeled.len() + t.unlabeled.len());
    writeln!(out, "review sampling for task {task}: pool {} (gold only), M = {m}", t.labeled.len())?;
    let pool_h = hasher.hash_all(cfg.exec, &t.labeled)?;
    let s = review_sample(&pool_h, m, cfg.exec)?;
    for w in &s.warnings {
        writeln!(out, "  warning: {w}")?;
    }
    let chosen: Vec<&HashedInstance> = s.indices.iter().map(|&i| &pool_h[i]).collect();
    let mut per_db: BTreeMap<&str, usize> = BTreeMap::new();
    for (n, &i) in s.indices.iter().enumerate() {
        *per_db.entry(t.labeled[i].db_id.as_str()).or_default() += 1;
        writeln!(out, "  nearest_comb={:.3} {}", nearest(&chosen, n, d_combined)?, line(&t.labeled[i]))?;
    }
    writeln!(out, "  per database: {per_db:?}")?;
    Ok(out)
}
