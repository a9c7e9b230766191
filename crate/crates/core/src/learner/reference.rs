use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;

use super::checkpoint::{Checkpoint, CheckpointContents};
use super::features::{featurize, stem, FeatureHasher, SparseFeatures};
use super::{EpochReport, LearnerError, Parser, Prediction, TermTally, WeightedExample};
use crate::corpus::{is_literal_token, Schema};
use crate::seed;
use crate::sqlrep::{name_tokens, skeletonize, SqlSkeleton, COL, TAB, VAL};

/// Skeleton classifier over hashed question features with deterministic slot filling.
///
/// Parameters are one dense weight row of length `dim` per catalogued skeleton.
/// Rows start at zero, so an untrained parser predicts uniformly over its catalog.
#[derive(Debug, Clone)]
pub struct ReferenceParser {
    hasher: FeatureHasher,
    catalog: Vec<SqlSkeleton>,
    index: HashMap<String, usize>,
    weights: Vec<Vec<f64>>,
    steps: u64,
}

impl Default for ReferenceParser {
    fn default() -> Self {
        Self::new(1 << 16)
    }
}

fn log_softmax_parts(scores: &[f64]) -> (f64, Vec<f64>) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();
    let lse = max + z.ln();
    (lse, scores.iter().map(|s| (s - lse).exp()).collect())
}

impl ReferenceParser {
    pub fn new(feature_dim: usize) -> Self {
        ReferenceParser {
            hasher: FeatureHasher::new(feature_dim),
            catalog: Vec::new(),
            index: HashMap::new(),
            weights: Vec::new(),
            steps: 0,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.hasher.dim()
    }

    pub fn hasher(&self) -> &FeatureHasher {
        &self.hasher
    }

    pub fn catalog(&self) -> &[SqlSkeleton] {
        &self.catalog
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Add one skeleton; returns its class index.
    pub fn add_skeleton(&mut self, sk: SqlSkeleton) -> usize {
        let key = sk.to_string();
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        let i = self.catalog.len();
        self.index.insert(key, i);
        self.catalog.push(sk);
        self.weights.push(vec![0.0; self.hasher.dim()]);
        i
    }

    fn class_of(&self, ex: &WeightedExample<'_>) -> Result<usize, LearnerError> {
        let sk = skeletonize(ex.sql(), ex.schema).map_err(|source| LearnerError::Sql {
            id: ex.instance.id.clone(),
            source,
        })?;
        self.index
            .get(&sk.to_string())
            .copied()
            .ok_or_else(|| LearnerError::UnknownSkeleton(sk.to_string()))
    }

    pub fn features(&self, nlq: &[String], schema: &Schema) -> SparseFeatures {
        featurize(nlq, schema, &self.hasher)
    }

    fn scores(&self, x: &SparseFeatures) -> Vec<f64> {
        self.weights
            .iter()
            .map(|row| x.iter().map(|(f, v)| row[f] * v).sum())
            .collect()
    }

    /// Class probabilities for a question.
    pub fn probabilities(&self, nlq: &[String], schema: &Schema) -> Vec<f64> {
        log_softmax_parts(&self.scores(&self.features(nlq, schema))).1
    }

    /// Flattened parameters, class-major.
    pub fn params(&self) -> Vec<f64> {
        self.weights.iter().flatten().copied().collect()
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.weights.len() * self.hasher.dim(), "parameter length");
        for (row, chunk) in self.weights.iter_mut().zip(params.chunks(self.hasher.dim())) {
            row.copy_from_slice(chunk);
        }
    }

    /// Analytic gradient of [`Parser::loss`] with respect to [`Self::params`].
    pub fn gradient(&self, ex: &WeightedExample<'_>) -> Result<Vec<f64>, LearnerError> {
        let gold = self.class_of(ex)?;
        let x = self.features(&ex.instance.nlq, ex.schema);
        let (_, probs) = log_softmax_parts(&self.scores(&x));
        let dim = self.hasher.dim();
        let mut g = vec![0.0; self.weights.len() * dim];
        for (c, p) in probs.iter().enumerate() {
            let coef = ex.weight * (p - if c == gold { 1.0 } else { 0.0 });
            for (f, v) in x.iter() {
                g[c * dim + f] += coef * v;
            }
        }
        Ok(g)
    }
}

impl Parser for ReferenceParser {
    fn register(&mut self, examples: &[WeightedExample<'_>]) -> Result<usize, LearnerError> {
        let before = self.catalog.len();
        for ex in examples {
            let sk = skeletonize(ex.sql(), ex.schema).map_err(|source| LearnerError::Sql {
                id: ex.instance.id.clone(),
                source,
            })?;
            self.add_skeleton(sk);
        }
        Ok(self.catalog.len() - before)
    }

    fn loss(&self, ex: &WeightedExample<'_>) -> Result<f64, LearnerError> {
        let gold = self.class_of(ex)?;
        let scores = self.scores(&self.features(&ex.instance.nlq, ex.schema));
        let (lse, _) = log_softmax_parts(&scores);
        Ok(ex.weight * (lse - scores[gold]))
    }

    fn train_epoch(
        &mut self,
        examples: &[WeightedExample<'_>],
        lr: f64,
        seed: u64,
    ) -> Result<EpochReport, LearnerError> {
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut seed::rng(seed, "epoch-order", 0));
        let mut terms: BTreeMap<_, TermTally> = BTreeMap::new();
        let mut total = 0.0;
        for &k in &order {
            let ex = &examples[k];
            let gold = self.class_of(ex)?;
            let x = self.features(&ex.instance.nlq, ex.schema);
            let scores = self.scores(&x);
            let (lse, probs) = log_softmax_parts(&scores);
            let loss = ex.weight * (lse - scores[gold]);
            if !loss.is_finite() {
                return Err(LearnerError::NonFinite {
                    what: "loss",
                    step: self.steps,
                });
            }
            let tally = terms.entry(ex.kind).or_default();
            tally.count += 1;
            tally.loss_sum += loss;
            tally.weight_sum += ex.weight;
            total += loss;
            if lr != 0.0 {
                for (c, p) in probs.iter().enumerate() {
                    let coef = lr * ex.weight * (p - if c == gold { 1.0 } else { 0.0 });
                    if !coef.is_finite() {
                        return Err(LearnerError::NonFinite {
                            what: "gradient",
                            step: self.steps,
                        });
                    }
                    let row = &mut self.weights[c];
                    for (f, v) in x.iter() {
                        row[f] -= coef * v;
                    }
                }
            }
            self.steps += 1;
        }
        Ok(EpochReport {
            mean_loss: if examples.is_empty() {
                0.0
            } else {
                total / examples.len() as f64
            },
            terms,
        })
    }

    fn predict(&self, nlq: &[String], schema: &Schema) -> Result<Prediction, LearnerError> {
        if self.catalog.is_empty() {
            return Err(LearnerError::NotTrained);
        }
        let probs = self.probabilities(nlq, schema);
        let mut best = 0;
        for (c, p) in probs.iter().enumerate().skip(1) {
            if *p > probs[best] {
                best = c;
            }
        }
        let skeleton = self.catalog[best].clone();
        Ok(Prediction {
            sql: fill_slots(&skeleton, nlq, schema),
            // argmax of a softmax is at least 1/C; the clamp only guards underflow
            confidence: probs[best].clamp(f64::MIN_POSITIVE, 1.0),
            skeleton,
        })
    }

    fn snapshot(&self) -> Checkpoint {
        Checkpoint::encode(&CheckpointContents {
            dim: self.hasher.dim(),
            steps: self.steps,
            catalog: self.catalog.iter().map(ToString::to_string).collect(),
            weights: self.weights.clone(),
        })
    }

    fn restore(&mut self, checkpoint: &Checkpoint) -> Result<(), LearnerError> {
        let c = checkpoint.decode()?;
        if c.dim == 0 {
            return Err(LearnerError::Integrity("zero feature dimension".into()));
        }
        let mut fresh = ReferenceParser::new(c.dim);
        for text in &c.catalog {
            let sk = SqlSkeleton::parse(text)
                .map_err(|e| LearnerError::Integrity(format!("bad skeleton `{text}`: {e}")))?;
            fresh.add_skeleton(sk);
        }
        if fresh.catalog.len() != c.catalog.len() {
            return Err(LearnerError::Integrity("duplicate skeletons".into()));
        }
        fresh.weights = c.weights;
        fresh.steps = c.steps;
        *self = fresh;
        Ok(())
    }

    fn reset(&mut self) {
        *self = ReferenceParser::new(self.hasher.dim());
    }

    fn catalog_len(&self) -> usize {
        self.catalog.len()
    }
}

/// Best overlap of a name with any question n-gram (n ≤ 3): Jaccard similarity of
/// stemmed token sets, and the start position of the first n-gram reaching it.
fn overlap(name: &str, nlq_stems: &[&str]) -> (f64, usize) {
    let name_set: Vec<String> = {
        let mut v: Vec<String> = name_tokens(name).map(|t| stem(&t).to_string()).collect();
        v.sort();
        v.dedup();
        v
    };
    let mut best = (0.0, usize::MAX);
    for n in 1..=3 {
        for (start, gram) in nlq_stems.windows(n).enumerate() {
            let mut g: Vec<&str> = gram.to_vec();
            g.sort();
            g.dedup();
            let inter = g.iter().filter(|t| name_set.iter().any(|x| x == *t)).count();
            if inter == 0 {
                continue;
            }
            let union = name_set.len() + g.len() - inter;
            let score = inter as f64 / union as f64;
            if score > best.0 || (score == best.0 && start < best.1) {
                best = (score, start);
            }
        }
    }
    best
}

/// Candidates with positive overlap: higher score first, then earlier mention,
/// then schema order.
fn ranked<'a>(names: impl Iterator<Item = (usize, &'a str)>, nlq_stems: &[&str]) -> Vec<usize> {
    let mut scored: Vec<(usize, f64, usize)> = names
        .map(|(i, n)| {
            let (s, p) = overlap(n, nlq_stems);
            (i, s, p)
        })
        .filter(|x| x.1 > 0.0)
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.2.cmp(&b.2)).then(a.0.cmp(&b.0)));
    scored.into_iter().map(|x| x.0).collect()
}

fn nth_or_last<T: Copy>(v: &[T], n: usize) -> Option<T> {
    v.get(n).or(v.last()).copied()
}

/// Fill a skeleton's placeholders from the question.
///
/// The j-th `TAB` takes the j-th best-overlapping table; the j-th `COL` the j-th
/// best-overlapping column among the chosen tables' columns (all columns if none of
/// those overlap). Overlap is Jaccard similarity between name tokens and question
/// n-grams; ties go to the earlier mention, then schema order. Placeholders beyond
/// the candidate list reuse the last candidate, and with no overlapping candidate
/// the first table/column is used. The j-th `VAL` takes the j-th quoted or numeric
/// question token, or `1` when there is none.
pub fn fill_slots(skeleton: &SqlSkeleton, nlq: &[String], schema: &Schema) -> String {
    let stems: Vec<&str> = nlq.iter().map(|t| stem(t)).collect();
    let tables = ranked(
        schema.tables.iter().enumerate().map(|(i, t)| (i, t.as_str())),
        &stems,
    );
    let n_tab = skeleton.placeholders().filter(|(_, p)| *p == TAB).count().max(1);
    let chosen: Vec<usize> = if tables.is_empty() {
        vec![0]
    } else {
        (0..n_tab).filter_map(|j| nth_or_last(&tables, j)).collect()
    };
    let mut columns = ranked(
        schema
            .columns
            .iter()
            .enumerate()
            .filter(|(_, c)| chosen.contains(&c.table))
            .map(|(i, c)| (i, c.name.as_str())),
        &stems,
    );
    if columns.is_empty() {
        columns = ranked(
            schema.columns.iter().enumerate().map(|(i, c)| (i, c.name.as_str())),
            &stems,
        );
    }
    let literals: Vec<&str> = nlq
        .iter()
        .filter(|t| is_literal_token(t))
        .map(String::as_str)
        .collect();

    let (mut t, mut c, mut v) = (0, 0, 0);
    let mut out: Vec<String> = Vec::with_capacity(skeleton.tokens().len());
    for tok in skeleton.tokens() {
        let filled = match tok.as_str() {
            TAB => {
                let i = nth_or_last(&tables, t).unwrap_or(0);
                t += 1;
                schema.tables.get(i).cloned().unwrap_or_else(|| TAB.to_string())
            }
            COL => {
                let fallback = schema
                    .columns
                    .iter()
                    .position(|col| col.table == chosen[0])
                    .unwrap_or(0);
                let i = nth_or_last(&columns, c).unwrap_or(fallback);
                c += 1;
                schema
                    .columns
                    .get(i)
                    .map(|col| col.name.clone())
                    .unwrap_or_else(|| COL.to_string())
            }
            VAL => {
                let lit = nth_or_last(&literals, v).unwrap_or("1");
                v += 1;
                lit.to_string()
            }
            other => other.to_string(),
        };
        out.push(filled);
    }
    out.join(" ")
}
