//! Independent oracles shared by the integration tests. Nothing here calls the
//! library's clustering or sampling code.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;
use sqlstream::distance::{HashedInstance, RelevanceMode};
use sqlstream::sqlrep::{keyword_hash, HashVector, Keyword, KeywordSet, VocabTag};

/// Total distance of every item to its nearest medoid.
pub fn cost(m: &[Vec<f64>], medoids: &[usize]) -> f64 {
    (0..m.len())
        .map(|i| medoids.iter().map(|&c| m[i][c]).fold(f64::INFINITY, f64::min))
        .sum()
}

/// Every k-subset of 0..n in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Cheapest medoid set by exhaustive enumeration.
pub fn global_optimum(m: &[Vec<f64>], k: usize) -> f64 {
    subsets(m.len(), k)
        .iter()
        .map(|s| cost(m, s))
        .fold(f64::INFINITY, f64::min)
}

/// No single medoid/non-medoid exchange lowers the cost by more than `tol`.
pub fn swap_optimal(m: &[Vec<f64>], medoids: &[usize], tol: f64) -> bool {
    let base = cost(m, medoids);
    for slot in 0..medoids.len() {
        for o in (0..m.len()).filter(|o| !medoids.contains(o)) {
            let mut alt = medoids.to_vec();
            alt[slot] = o;
            if cost(m, &alt) < base - tol {
                return false;
            }
        }
    }
    true
}

/// Naive k-medoids following the documented procedure step by step: seed with the
/// item of least total distance then farthest-first, alternate Voronoi rounds, then
/// apply the best single swap until none helps. Costs are recomputed from scratch.
pub fn naive_kmedoids(m: &[Vec<f64>], k: usize) -> Vec<usize> {
    let n = m.len();
    let tol = |c: f64| 1e-12 * (1.0 + c.abs());
    let nearest = |meds: &[usize], i: usize| -> (usize, f64) {
        if let Some(c) = meds.iter().position(|&x| x == i) {
            return (c, 0.0);
        }
        let mut best = (0, m[i][meds[0]]);
        for (c, &x) in meds.iter().enumerate().skip(1) {
            if m[i][x] < best.1 {
                best = (c, m[i][x]);
            }
        }
        best
    };

    let row_sums: Vec<f64> = (0..n).map(|i| (0..n).map(|j| m[i][j]).sum()).collect();
    let mut first = 0;
    for i in 1..n {
        if row_sums[i] < row_sums[first] {
            first = i;
        }
    }
    let mut meds = vec![first];
    while meds.len() < k {
        let gap = |i: usize| meds.iter().map(|&c| m[i][c]).fold(f64::INFINITY, f64::min);
        let mut pick = None;
        for i in 0..n {
            if meds.contains(&i) {
                continue;
            }
            if pick.is_none_or(|p| gap(i) > gap(p)) {
                pick = Some(i);
            }
        }
        meds.push(pick.unwrap());
    }

    for _ in 0..100 {
        let owner: Vec<usize> = (0..n).map(|i| nearest(&meds, i).0).collect();
        let mut changed = false;
        for c in 0..meds.len() {
            let members: Vec<usize> = (0..n).filter(|&i| owner[i] == c).collect();
            let within = |x: usize| members.iter().map(|&y| m[x][y]).sum::<f64>();
            let mut best = (meds[c], within(meds[c]));
            for &x in &members {
                if within(x) < best.1 - tol(best.1) {
                    best = (x, within(x));
                }
            }
            if best.0 != meds[c] {
                meds[c] = best.0;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    loop {
        let near: Vec<f64> = (0..n)
            .map(|i| meds.iter().map(|&c| m[i][c]).fold(f64::INFINITY, f64::min))
            .collect();
        let current: f64 = near.iter().sum();
        let mut best: Option<(usize, usize, f64)> = None;
        for c in 0..meds.len() {
            for o in (0..n).filter(|o| !meds.contains(o)) {
                let mut alt = meds.clone();
                alt[c] = o;
                let delta: f64 = (0..n)
                    .map(|i| alt.iter().map(|&x| m[i][x]).fold(f64::INFINITY, f64::min) - near[i])
                    .sum();
                if best.is_none_or(|b| delta < b.2) {
                    best = Some((c, o, delta));
                }
            }
        }
        match best {
            Some((c, o, d)) if d < -tol(current) => meds[c] = o,
            _ => break,
        }
    }
    meds.sort_unstable();
    meds
}

/// Euclidean distance between two bit sets given by their set indices.
pub fn bit_distance(a: &HashVector, b: &HashVector) -> f64 {
    let x: BTreeSet<usize> = a.indices().collect();
    let y: BTreeSet<usize> = b.indices().collect();
    (x.symmetric_difference(&y).count() as f64).sqrt()
}

/// What Algorithm 1 should select: the relevance pool (sorted item indices) and the
/// chosen medoids (indices into `past`).
pub fn brute_prompt(
    past: &[HashedInstance],
    current: &[HashedInstance],
    teacher_size: usize,
    pool_size: usize,
    mode: RelevanceMode,
) -> (Vec<usize>, Vec<usize>) {
    let omega: Vec<f64> = past
        .iter()
        .map(|x| {
            let ds = current.iter().map(|u| bit_distance(&u.schema, &x.schema));
            match mode {
                RelevanceMode::DefaultMin => ds.fold(f64::INFINITY, f64::min),
                RelevanceMode::LiteralMax => ds.fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..past.len()).collect();
    // most relevant first, ties to the lower index
    order.sort_by(|&a, &b| {
        let c = omega[a].partial_cmp(&omega[b]).unwrap();
        let c = if mode == RelevanceMode::LiteralMax { c.reverse() } else { c };
        c.then(a.cmp(&b))
    });
    let mut pool: Vec<usize> = order.into_iter().take(pool_size.max(teacher_size)).collect();
    pool.sort_unstable();
    if teacher_size >= pool.len() {
        return (pool.clone(), pool);
    }
    let m: Vec<Vec<f64>> = pool
        .iter()
        .map(|&a| {
            pool.iter()
                .map(|&b| bit_distance(past[a].structure.as_ref().unwrap(), past[b].structure.as_ref().unwrap()))
                .collect()
        })
        .collect();
    let medoids = naive_kmedoids(&m, teacher_size).into_iter().map(|l| pool[l]).collect();
    (pool, medoids)
}

/// A hashed instance with random schema bits and a random keyword set.
pub fn random_hashed<R: Rng>(rng: &mut R, id: usize, schema_dim: usize) -> HashedInstance {
    let bits: Vec<usize> = (0..schema_dim).filter(|_| rng.gen_bool(0.35)).collect();
    let mut kws = KeywordSet::default();
    kws.insert(Keyword::Select);
    for &k in Keyword::ALL {
        if rng.gen_bool(0.2) {
            kws.insert(k);
        }
    }
    HashedInstance {
        id: format!("h{id}"),
        schema: HashVector::from_indices(VocabTag::Schema, schema_dim, bits),
        structure: Some(keyword_hash(kws)),
    }
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
