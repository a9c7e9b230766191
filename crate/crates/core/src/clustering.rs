//! K-medoids over arbitrary symmetric dissimilarities, and top-k selection.
//!
//! [`kmedoids`] seeds deterministically (most central item first, then repeatedly
//! the item farthest from all chosen medoids), runs alternating assign/update
//! rounds, and finishes with single-swap refinement so that no exchange of one
//! medoid for one non-medoid lowers the total cost. Combined distances are products
//! of metrics and need not satisfy the triangle inequality; nothing here relies on it.

use rand::seq::index;
use thiserror::Error;

use crate::par::{self, ExecMode};
use crate::seed;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("k = {k} is invalid for {n} items")]
    InvalidK { k: usize, n: usize },
    #[error("dissimilarity ({i}, {j}) = {value} is negative or not finite")]
    BadDistance { i: usize, j: usize, value: f64 },
    #[error("dissimilarity matrix is not symmetric at ({i}, {j})")]
    Asymmetric { i: usize, j: usize },
    #[error("dissimilarity matrix row {row} has length {len}, expected {n}")]
    Ragged { row: usize, len: usize, n: usize },
}

/// Dense symmetric dissimilarity matrix with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistMatrix {
    /// Evaluate `f(i, j)` for every `i < j` and mirror it. Rows are computed in
    /// parallel under [`ExecMode::Parallel`]; each entry is computed exactly once, so
    /// the matrix is bitwise identical in either mode.
    pub fn from_fn<E, F>(n: usize, mode: ExecMode, f: F) -> Result<Self, E>
    where
        E: Send + From<ClusterError>,
        F: Fn(usize, usize) -> Result<f64, E> + Sync + Send,
    {
        let rows: Vec<Result<Vec<f64>, E>> =
            par::map_range(mode, n, |i| ((i + 1)..n).map(|j| f(i, j)).collect());
        let mut data = vec![0.0; n * n];
        for (i, row) in rows.into_iter().enumerate() {
            for (off, d) in row?.into_iter().enumerate() {
                let j = i + 1 + off;
                if !(d.is_finite() && d >= 0.0) {
                    return Err(ClusterError::BadDistance { i, j, value: d }.into());
                }
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        Ok(DistMatrix { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ClusterError> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(ClusterError::Ragged { row: i, len: row.len(), n });
            }
            for (j, &d) in row.iter().enumerate() {
                if !(d.is_finite() && d >= 0.0) || (i == j && d != 0.0) {
                    return Err(ClusterError::BadDistance { i, j, value: d });
                }
                if j < i && d != rows[j][i] {
                    return Err(ClusterError::Asymmetric { i, j });
                }
                data.push(d);
            }
        }
        Ok(DistMatrix { n, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

/// Result of k-medoids. Cluster `c` has medoid `medoids[c]`; medoids are listed in
/// increasing item order.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub assignments: Vec<usize>,
    pub medoids: Vec<usize>,
    pub total_cost: f64,
    /// Total cost after each assignment round and each accepted swap.
    pub cost_trace: Vec<f64>,
}

impl Clustering {
    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignments
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == cluster)
            .map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KMedoidsConfig {
    pub max_iter: usize,
    /// Extra runs from random medoid sets; the cheapest result wins.
    pub restarts: usize,
    pub seed: u64,
    /// Run single-swap refinement after the alternating rounds.
    pub swap_refine: bool,
    pub mode: ExecMode,
}

impl Default for KMedoidsConfig {
    fn default() -> Self {
        KMedoidsConfig {
            max_iter: 100,
            restarts: 0,
            seed: 0,
            swap_refine: true,
            mode: ExecMode::default(),
        }
    }
}

/// Assign every item to its nearest medoid; medoids always own their cluster.
/// Ties go to the medoid listed first.
fn assign(m: &DistMatrix, medoids: &[usize]) -> (Vec<usize>, f64) {
    let mut out = vec![0; m.len()];
    let mut cost = 0.0;
    for (i, slot) in out.iter_mut().enumerate() {
        if let Some(c) = medoids.iter().position(|&x| x == i) {
            *slot = c;
            continue;
        }
        let mut best = (0, m.get(i, medoids[0]));
        for (c, &med) in medoids.iter().enumerate().skip(1) {
            let d = m.get(i, med);
            if d < best.1 {
                best = (c, d);
            }
        }
        *slot = best.0;
        cost += best.1;
    }
    (out, cost)
}

fn tolerance(cost: f64) -> f64 {
    1e-12 * (1.0 + cost.abs())
}

fn initial_medoids(m: &DistMatrix, k: usize) -> Vec<usize> {
    let n = m.len();
    let sums: Vec<f64> = (0..n).map(|i| (0..n).map(|j| m.get(i, j)).sum()).collect();
    let mut first = 0;
    for i in 1..n {
        if sums[i] < sums[first] {
            first = i;
        }
    }
    let mut chosen = vec![first];
    let mut near: Vec<f64> = (0..n).map(|i| m.get(i, first)).collect();
    while chosen.len() < k {
        let mut pick: Option<usize> = None;
        for i in 0..n {
            if chosen.contains(&i) {
                continue;
            }
            if pick.is_none_or(|p| near[i] > near[p]) {
                pick = Some(i);
            }
        }
        let p = pick.expect("k <= n leaves a candidate");
        chosen.push(p);
        for (i, d) in near.iter_mut().enumerate() {
            *d = d.min(m.get(i, p));
        }
    }
    chosen
}

fn alternate(m: &DistMatrix, medoids: &mut [usize], max_iter: usize, trace: &mut Vec<f64>) {
    for _ in 0..max_iter {
        let (assignments, cost) = assign(m, medoids);
        trace.push(cost);
        let mut changed = false;
        for (c, med) in medoids.iter_mut().enumerate() {
            let members: Vec<usize> = (0..m.len()).filter(|&i| assignments[i] == c).collect();
            let within = |x: usize| members.iter().map(|&y| m.get(x, y)).sum::<f64>();
            let mut best = (*med, within(*med));
            for &x in &members {
                let s = within(x);
                if s < best.1 - tolerance(best.1) {
                    best = (x, s);
                }
            }
            if best.0 != *med {
                *med = best.0;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
}

/// Best single swap (medoid slot, replacement item, cost delta), if any lowers cost.
fn best_swap(m: &DistMatrix, medoids: &[usize], mode: ExecMode) -> Option<(usize, usize, f64)> {
    let n = m.len();
    let k = medoids.len();
    let mut near = vec![(usize::MAX, f64::INFINITY); n];
    let mut second = vec![f64::INFINITY; n];
    for i in 0..n {
        for (c, &med) in medoids.iter().enumerate() {
            let d = m.get(i, med);
            if d < near[i].1 {
                second[i] = near[i].1;
                near[i] = (c, d);
            } else if d < second[i] {
                second[i] = d;
            }
        }
    }
    let current: f64 = near.iter().map(|x| x.1).sum();
    let candidates: Vec<usize> = (0..n).filter(|o| !medoids.contains(o)).collect();
    let deltas = par::map_range(mode, k * candidates.len(), |idx| {
        let (c, o) = (idx / candidates.len(), candidates[idx % candidates.len()]);
        let mut delta = 0.0;
        for i in 0..n {
            let d_new = m.get(i, o);
            let replaced = if near[i].0 == c {
                second[i].min(d_new)
            } else {
                near[i].1.min(d_new)
            };
            delta += replaced - near[i].1;
        }
        (c, o, delta)
    });
    let best = deltas
        .into_iter()
        .fold(None::<(usize, usize, f64)>, |acc, cand| match acc {
            Some(a) if a.2 <= cand.2 => Some(a),
            _ => Some(cand),
        })?;
    (best.2 < -tolerance(current)).then_some(best)
}

fn refine(m: &DistMatrix, mut medoids: Vec<usize>, cfg: &KMedoidsConfig) -> Clustering {
    let mut trace = Vec::new();
    alternate(m, &mut medoids, cfg.max_iter.max(1), &mut trace);
    if cfg.swap_refine {
        // Every accepted swap strictly lowers the cost, so this terminates; the
        // bound only guards against pathological float behaviour.
        for _ in 0..(100 * m.len().max(1)) {
            let Some((c, o, _)) = best_swap(m, &medoids, cfg.mode) else {
                break;
            };
            medoids[c] = o;
            trace.push(assign(m, &medoids).1);
        }
    }
    medoids.sort_unstable();
    let (assignments, total_cost) = assign(m, &medoids);
    Clustering {
        assignments,
        medoids,
        total_cost,
        cost_trace: trace,
    }
}

/// Partition the items of `m` into `k` clusters.
pub fn kmedoids(m: &DistMatrix, k: usize, cfg: &KMedoidsConfig) -> Result<Clustering, ClusterError> {
    let n = m.len();
    if k == 0 || k > n {
        return Err(ClusterError::InvalidK { k, n });
    }
    let mut best = refine(m, initial_medoids(m, k), cfg);
    for r in 0..cfg.restarts {
        let mut rng = seed::rng(cfg.seed, "kmedoids-restart", r as u64);
        let start = index::sample(&mut rng, n, k).into_vec();
        let cand = refine(m, start, cfg);
        if cand.total_cost < best.total_cost - tolerance(best.total_cost) {
            best = cand;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Ascending,
    Descending,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopK {
    /// Selected item indices in increasing index order.
    pub indices: Vec<usize>,
    /// Fewer than `k` items were available.
    pub truncated: bool,
}

/// The `k` items with the most extreme scores; ties go to the lower index.
pub fn topk(scores: &[f64], k: usize, order: Order) -> TopK {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        let c = scores[a].total_cmp(&scores[b]);
        let c = match order {
            Order::Ascending => c,
            Order::Descending => c.reverse(),
        };
        c.then(a.cmp(&b))
    });
    let truncated = k > scores.len();
    idx.truncate(k);
    idx.sort_unstable();
    TopK {
        indices: idx,
        truncated,
    }
}
