//! Template-generated task streams.
//!
//! Every database holds single-table schemas with a `name` column and a few numeric
//! columns. Questions are built from a query family (the SQL shape), a body that names
//! the table, columns and values literally, an optional cue word that reveals the
//! family ("average", "how many"), and a lead-in phrase. Each task speaks its own
//! dialect: the lead-in that signals a family is reassigned from task to task, and
//! a couple of task-specific filler words accompany most questions. Families whose
//! bodies coincide can then only be told apart by the dialect when the cue is
//! missing, which is what later tasks overwrite.
//!
//! Family frequencies are skewed differently in every task. Each task also owns
//! held-out databases that appear only in its test set, so every test set has
//! zero-shot instances.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    build_task_stream, tokenize, Column, ColumnType, Corpus, CorpusError, Instance, Label, LabeledCap, Schema,
    SplitConfig, SplitTag, TaskStream,
};
use crate::seed;

const TABLES: &[&str] = &[
    "singer", "pet", "car", "student", "teacher", "movie", "book", "airport", "ship", "hotel", "museum", "player",
    "team", "product", "course", "club", "station", "album", "song", "artist", "customer", "flight", "train",
    "building", "employee", "school", "river", "mountain", "restaurant", "camera", "planet", "island", "bridge",
    "castle", "festival", "garden", "market", "tower", "vessel", "engine", "painting", "concert", "stadium",
    "volcano", "satellite", "tractor", "violin", "helmet", "lantern", "robot", "rocket", "wagon", "canal",
    "harbor", "temple", "tunnel", "carpet", "kettle", "magnet", "pilot",
];

const NUMERIC_COLUMNS: &[&str] = &[
    "age", "price", "year", "rating", "weight", "height", "salary", "capacity", "budget", "score", "length",
    "speed", "population", "area", "duration", "distance", "volume", "width", "depth", "revenue",
];

const LEAD_INS: &[&str] = &[
    "list", "show", "give me", "what are", "find", "return", "tell me", "display", "get", "report", "fetch",
    "provide", "retrieve", "print", "output", "i want", "i need", "can you show", "could you list", "let me see",
    "bring up", "look up", "pull up", "dig up", "compute", "calculate", "determine", "identify", "gather",
    "collect", "extract", "present", "summarize", "produce", "state", "reveal", "check", "query", "obtain",
    "enumerate",
];

const FILLERS: &[&str] = &[
    "please", "quickly", "now", "kindly", "again", "today", "overall", "currently", "exactly", "precisely",
    "briefly", "simply", "honestly", "basically", "really", "actually", "certainly", "promptly", "directly",
    "frankly", "plainly", "roughly", "truly", "openly",
];

const PEOPLE: &[&str] = &["Alice", "Bob", "Carol", "Dave", "Erin", "Frank", "Grace", "Heidi"];

/// The query families. `c1`/`c2` are columns, `t` the table, `v` a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Count,
    Project,
    FilterGt,
    CountLt,
    Avg,
    Max,
    Min,
    Order,
    TopK,
    Group,
    Distinct,
    SumGt,
    ByName,
}

const FAMILIES: [Family; 13] = [
    Family::Count,
    Family::Project,
    Family::FilterGt,
    Family::CountLt,
    Family::Avg,
    Family::Max,
    Family::Min,
    Family::Order,
    Family::TopK,
    Family::Group,
    Family::Distinct,
    Family::SumGt,
    Family::ByName,
];

impl Family {
    fn cue(self) -> Option<&'static str> {
        match self {
            Family::Count | Family::CountLt => Some("how many"),
            Family::Avg => Some("the average"),
            Family::Max => Some("the maximum"),
            Family::Min => Some("the minimum"),
            Family::Order => Some("sorted"),
            Family::Distinct => Some("the distinct"),
            Family::SumGt => Some("the total"),
            Family::Group => Some("for each"),
            Family::Project | Family::FilterGt | Family::TopK | Family::ByName => None,
        }
    }

    /// (question body, SQL) for one table.
    fn render(self, t: &str, c1: &str, c2: &str, v: u32, who: &str) -> (String, String) {
        match self {
            Family::Count => (format!("{t}s"), format!("SELECT count(*) FROM {t}")),
            Family::Project => (format!("{c1} of {t}s"), format!("SELECT {c1} FROM {t}")),
            Family::FilterGt => (
                format!("{c1} of {t}s with {c2} above {v}"),
                format!("SELECT {c1} FROM {t} WHERE {c2} > {v}"),
            ),
            Family::CountLt => (
                format!("{t}s with {c1} below {v}"),
                format!("SELECT count(*) FROM {t} WHERE {c1} < {v}"),
            ),
            Family::Avg => (format!("{c1} of {t}s"), format!("SELECT avg({c1}) FROM {t}")),
            Family::Max => (format!("{c1} of {t}s"), format!("SELECT max({c1}) FROM {t}")),
            Family::Min => (format!("{c1} of {t}s"), format!("SELECT min({c1}) FROM {t}")),
            Family::Order => (
                format!("{c1} of {t}s by {c2}"),
                format!("SELECT {c1} FROM {t} ORDER BY {c2}"),
            ),
            Family::TopK => (
                format!("{c1} of the top {v} {t}s by {c2}"),
                format!("SELECT {c1} FROM {t} ORDER BY {c2} DESC LIMIT {v}"),
            ),
            Family::Group => (
                format!("{c1} and the number of {t}s"),
                format!("SELECT {c1} , count(*) FROM {t} GROUP BY {c1}"),
            ),
            Family::Distinct => (format!("{c1} of {t}s"), format!("SELECT DISTINCT {c1} FROM {t}")),
            Family::SumGt => (
                format!("{c1} of {t}s with {c2} above {v}"),
                format!("SELECT sum({c1}) FROM {t} WHERE {c2} > {v}"),
            ),
            Family::ByName => (
                format!("{c1} of the {t} whose name is '{who}'"),
                format!("SELECT {c1} FROM {t} WHERE name = '{who}'"),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub tasks: usize,
    /// Databases per task that supply training (and some test) questions.
    pub train_dbs: usize,
    /// Databases per task that appear only in the test set.
    pub heldout_dbs: usize,
    pub tables_per_db: usize,
    /// Numeric columns per table, besides `name`.
    pub columns_per_table: usize,
    /// Training questions per task; the first `labeled` of a seeded shuffle keep SQL.
    pub train: usize,
    pub labeled: usize,
    pub valid: usize,
    pub test: usize,
    /// Fraction of test questions drawn from held-out databases.
    pub heldout_test_fraction: f64,
    /// Zipf exponent of the per-task family distribution.
    pub skew: f64,
    /// Probability that a question carries its family cue.
    pub cue_rate: f64,
    /// Lead-in phrases per family within one task.
    pub leads_per_family: usize,
    /// Size of the lead-in vocabulary shared by all tasks. A small vocabulary makes
    /// tasks reuse phrases for different families.
    pub lead_pool: usize,
    /// Probability that a question carries its task's filler words.
    pub filler_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            tasks: 6,
            train_dbs: 2,
            heldout_dbs: 1,
            tables_per_db: 2,
            columns_per_table: 4,
            train: 120,
            labeled: 40,
            valid: 0,
            test: 40,
            heldout_test_fraction: 0.25,
            skew: 1.0,
            cue_rate: 0.5,
            leads_per_family: 3,
            lead_pool: LEAD_INS.len(),
            filler_rate: 0.8,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Equal-size tasks with no family skew, for cost measurements.
    pub fn uniform(tasks: usize, seed: u64) -> Self {
        SynthConfig {
            tasks,
            skew: 0.0,
            seed,
            ..SynthConfig::default()
        }
    }

    fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: &str| Err(CorpusError::Config(format!("synthetic stream: {m}")));
        if self.tasks == 0 || self.train_dbs == 0 || self.tables_per_db == 0 {
            return bad("tasks, train_dbs and tables_per_db must be positive");
        }
        if self.columns_per_table < 2 || self.columns_per_table > NUMERIC_COLUMNS.len() {
            return bad("columns_per_table must be between 2 and the column pool size");
        }
        if self.test == 0 || self.labeled > self.train {
            return bad("test must be positive and labeled at most train");
        }
        if self.leads_per_family == 0
            || self.lead_pool > LEAD_INS.len()
            || self.leads_per_family * FAMILIES.len() > self.lead_pool
        {
            return bad("leads_per_family × families must fit a lead_pool within the lead-in vocabulary");
        }
        if self.tasks * 2 > FILLERS.len() {
            return bad("too many tasks for the filler vocabulary");
        }
        if !(0.0..=1.0).contains(&self.heldout_test_fraction)
            || !(0.0..=1.0).contains(&self.cue_rate)
            || !(0.0..=1.0).contains(&self.filler_rate)
        {
            return bad("rates must lie in [0, 1]");
        }
        Ok(())
    }
}

struct Dialect {
    lead_ins: Vec<Vec<&'static str>>,
    fillers: [&'static str; 2],
    weights: Vec<f64>,
}

fn dialect(rng: &mut ChaCha8Rng, task: usize, cfg: &SynthConfig) -> Dialect {
    let mut leads: Vec<&'static str> = LEAD_INS[..cfg.lead_pool].to_vec();
    leads.shuffle(rng);
    let lead_ins = leads
        .chunks(cfg.leads_per_family)
        .take(FAMILIES.len())
        .map(<[_]>::to_vec)
        .collect();
    let mut order: Vec<usize> = (0..FAMILIES.len()).collect();
    order.shuffle(rng);
    let mut weights = vec![0.0; FAMILIES.len()];
    for (rank, &f) in order.iter().enumerate() {
        weights[f] = 1.0 / ((rank + 1) as f64).powf(cfg.skew);
    }
    Dialect {
        lead_ins,
        fillers: [FILLERS[2 * task], FILLERS[2 * task + 1]],
        weights,
    }
}

fn pick_weighted(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.len() - 1
}

fn question(rng: &mut ChaCha8Rng, d: &Dialect, schema: &Schema, cfg: &SynthConfig) -> (String, String) {
    let fi = pick_weighted(rng, &d.weights);
    let family = FAMILIES[fi];
    let table = rng.gen_range(0..schema.tables.len());
    let t = &schema.tables[table];
    let numeric: Vec<&str> = schema
        .columns_of(table)
        .filter(|(_, c)| c.ty == ColumnType::Number)
        .map(|(_, c)| c.name.as_str())
        .collect();
    let mut two: Vec<&str> = numeric.choose_multiple(rng, 2).copied().collect();
    two.shuffle(rng);
    let (c1, c2) = (two[0], two[1]);
    let v = match family {
        Family::TopK => rng.gen_range(2..10),
        _ => rng.gen_range(10..100),
    };
    let who = PEOPLE.choose(rng).copied().unwrap_or("Alice");
    let (body, sql) = family.render(t, c1, c2, v, who);

    let mut words = vec![d.lead_ins[fi].choose(rng).copied().unwrap_or("list").to_string()];
    if let Some(cue) = family.cue() {
        if rng.gen::<f64>() < cfg.cue_rate {
            words.push(cue.to_string());
        }
    }
    words.push(body);
    if rng.gen::<f64>() < cfg.filler_rate {
        words.insert(0, d.fillers[0].to_string());
        words.push(d.fillers[1].to_string());
    }
    (words.join(" "), sql)
}

fn make_schema(db_id: &str, tables: Vec<String>, rng: &mut ChaCha8Rng, ncols: usize) -> Result<Schema, CorpusError> {
    let mut columns = Vec::new();
    for t in 0..tables.len() {
        columns.push(Column {
            table: t,
            name: "name".into(),
            ty: ColumnType::Text,
        });
        for c in NUMERIC_COLUMNS.choose_multiple(rng, ncols) {
            columns.push(Column {
                table: t,
                name: (*c).to_string(),
                ty: ColumnType::Number,
            });
        }
    }
    Schema::new(db_id, tables, columns).map_err(CorpusError::Config)
}

/// Generate the corpus and its database grouping.
pub fn generate(cfg: &SynthConfig) -> Result<(Corpus, SplitConfig), CorpusError> {
    cfg.validate()?;
    let mut rng = seed::rng(cfg.seed, "synth", 0);
    let mut nouns: Vec<&str> = TABLES.to_vec();
    nouns.shuffle(&mut rng);
    let mut next_noun = 0usize;
    let mut corpus = Corpus::default();
    let mut groups = Vec::with_capacity(cfg.tasks);

    for task in 0..cfg.tasks {
        let d = dialect(&mut rng, task, cfg);
        let mut train_dbs = Vec::new();
        let mut heldout = Vec::new();
        for j in 0..cfg.train_dbs + cfg.heldout_dbs {
            let tables: Vec<String> = (0..cfg.tables_per_db)
                .map(|_| {
                    // table names repeat across databases once the pool runs out
                    let noun = nouns[next_noun % nouns.len()];
                    next_noun += 1;
                    noun.to_string()
                })
                .collect();
            let db_id = format!("t{}_{}_{}", task + 1, j + 1, tables[0]);
            let schema = make_schema(&db_id, tables, &mut rng, cfg.columns_per_table)?;
            if j < cfg.train_dbs {
                train_dbs.push(schema.db_id.clone());
            } else {
                heldout.push(schema.db_id.clone());
            }
            corpus.schemas.insert(schema.db_id.clone(), schema);
        }

        let heldout_test = if heldout.is_empty() {
            0
        } else {
            ((cfg.test as f64 * cfg.heldout_test_fraction).round() as usize).max(1)
        };
        let plan = [
            (SplitTag::Train, cfg.train, 0),
            (SplitTag::Valid, cfg.valid, 0),
            (SplitTag::Test, cfg.test, heldout_test),
        ];
        for (split, n, from_heldout) in plan {
            for q in 0..n {
                let dbs = if q < from_heldout { &heldout } else { &train_dbs };
                let db = &dbs[rng.gen_range(0..dbs.len())];
                let (text, sql) = question(&mut rng, &d, &corpus.schemas[db], cfg);
                corpus.instances.push(Instance {
                    id: format!("t{}-{:?}-{q}", task + 1, split).to_lowercase(),
                    db_id: db.clone(),
                    nlq: tokenize(&text),
                    question: text,
                    label: Label::Gold { sql },
                    origin_task: None,
                    split,
                });
            }
        }
        groups.push(train_dbs.into_iter().chain(heldout).collect());
    }

    let split = SplitConfig {
        k: cfg.tasks,
        groups,
        labeled_cap: LabeledCap::Uniform(cfg.labeled),
        seed: None,
    };
    Ok((corpus, split))
}

/// Generate and split in one step.
pub fn synth_stream(cfg: &SynthConfig) -> Result<TaskStream, CorpusError> {
    let (corpus, split) = generate(cfg)?;
    build_task_stream(&corpus, &split, cfg.seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{stream_stats, zero_shot_count};
    use crate::sqlrep::{canonical_sql, skeletonize};

    #[test]
    fn default_stream_shape() {
        let s = synth_stream(&SynthConfig::default()).unwrap();
        assert_eq!(s.len(), 6);
        for (t, st) in s.tasks.iter().zip(stream_stats(&s)) {
            assert_eq!(t.labeled.len(), 40);
            assert_eq!(t.unlabeled.len(), 80);
            assert_eq!(t.test.len(), 40);
            assert!(zero_shot_count(t, &s.schemas) >= 10);
            assert_eq!(st.labeled, 40);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&SynthConfig::default()).unwrap();
        let b = generate(&SynthConfig::default()).unwrap();
        assert_eq!(a.0.instances, b.0.instances);
        assert_eq!(a.1, b.1);
        let c = generate(&SynthConfig { seed: 1, ..SynthConfig::default() }).unwrap();
        assert_ne!(a.0.instances, c.0.instances);
    }

    #[test]
    fn sql_is_well_formed_and_families_repeat_across_tasks() {
        let (corpus, _) = generate(&SynthConfig::default()).unwrap();
        let mut per_task: std::collections::BTreeMap<String, std::collections::BTreeSet<String>> = Default::default();
        for inst in &corpus.instances {
            let sql = inst.sql().unwrap();
            canonical_sql(sql).unwrap();
            let sk = skeletonize(sql, &corpus.schemas[&inst.db_id]).unwrap();
            per_task.entry(sk.to_string()).or_default().insert(inst.id[..2].to_string());
        }
        assert_eq!(per_task.len(), FAMILIES.len());
        assert!(per_task.values().filter(|tasks| tasks.len() > 1).count() >= 10);
    }

    #[test]
    fn long_streams_reuse_nouns_safely() {
        let s = synth_stream(&SynthConfig::uniform(12, 3)).unwrap();
        assert_eq!(s.len(), 12);
        assert_eq!(s.schemas.len(), 36);
    }
}
