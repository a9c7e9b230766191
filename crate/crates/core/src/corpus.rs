//! Schemas, questions, and task streams.
//!
//! A corpus is a schema file plus an examples file (both JSON lists). A
//! [`SplitConfig`] groups databases into `K` tasks; [`build_task_stream`] then cuts
//! each group's training questions into a small labelled set and a label-free pool,
//! and carries the group's validation and test questions along.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;
use crate::sqlrep;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: malformed document: {message}")]
    Document { file: String, message: String },
    #[error("{file}: record {index}: {message}")]
    Record {
        file: String,
        index: usize,
        message: String,
    },
    #[error("unknown database `{db_id}` referenced by {referrer}")]
    Reference { db_id: String, referrer: String },
    #[error("duplicate {what} `{id}`")]
    Duplicate { what: &'static str, id: String },
    #[error("split config: {0}")]
    Config(String),
    #[error("invalid pseudo-label confidence {0}; must lie in (0, 1]")]
    Confidence(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Text,
    Number,
    Time,
    Boolean,
    Other,
}

impl ColumnType {
    fn parse(s: &str) -> Self {
        match s.trim().to_ascii_lowercase().as_str() {
            "text" => ColumnType::Text,
            "number" => ColumnType::Number,
            "time" => ColumnType::Time,
            "boolean" => ColumnType::Boolean,
            _ => ColumnType::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub table: usize,
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
}

/// A relational database schema. Names are stored normalised (trimmed, lowercase).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub db_id: String,
    pub tables: Vec<String>,
    pub columns: Vec<Column>,
}

fn normalize_name(s: &str) -> String {
    s.trim().to_lowercase()
}

impl Schema {
    /// Build a schema, normalising names and checking the structural invariants.
    pub fn new(
        db_id: impl Into<String>,
        tables: Vec<String>,
        columns: Vec<Column>,
    ) -> Result<Self, String> {
        let db_id = db_id.into().trim().to_string();
        if db_id.is_empty() {
            return Err("empty db_id".into());
        }
        let tables: Vec<String> = tables.iter().map(|t| normalize_name(t)).collect();
        if let Some(i) = tables.iter().position(|t| t.is_empty()) {
            return Err(format!("table {i} has an empty name"));
        }
        let mut out = Vec::with_capacity(columns.len());
        for (i, c) in columns.into_iter().enumerate() {
            let name = normalize_name(&c.name);
            if name.is_empty() {
                return Err(format!("column {i} has an empty name"));
            }
            if c.table >= tables.len() {
                return Err(format!(
                    "column {i} (`{name}`) points at table {} but only {} tables exist",
                    c.table,
                    tables.len()
                ));
            }
            out.push(Column {
                table: c.table,
                name,
                ty: c.ty,
            });
        }
        Ok(Schema {
            db_id,
            tables,
            columns: out,
        })
    }

    pub fn columns_of(&self, table: usize) -> impl Iterator<Item = (usize, &Column)> {
        self.columns
            .iter()
            .enumerate()
            .filter(move |(_, c)| c.table == table)
    }

    pub fn table_index(&self, name: &str) -> Option<usize> {
        self.tables.iter().position(|t| t.eq_ignore_ascii_case(name))
    }

    pub fn is_column(&self, name: &str) -> bool {
        self.columns.iter().any(|c| c.name.eq_ignore_ascii_case(name))
    }
}

/// Which slice of the source file an example came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Valid,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Gold,
    Pseudo,
    None,
}

/// SQL attached to a question, if any. Pseudo labels carry the model confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Label {
    Gold { sql: String },
    Pseudo { sql: String, confidence: f64 },
    None,
}

impl Label {
    pub fn pseudo(sql: impl Into<String>, confidence: f64) -> Result<Self, CorpusError> {
        if !(confidence > 0.0 && confidence <= 1.0) {
            return Err(CorpusError::Confidence(confidence));
        }
        Ok(Label::Pseudo {
            sql: sql.into(),
            confidence,
        })
    }

    pub fn kind(&self) -> LabelKind {
        match self {
            Label::Gold { .. } => LabelKind::Gold,
            Label::Pseudo { .. } => LabelKind::Pseudo,
            Label::None => LabelKind::None,
        }
    }

    pub fn sql(&self) -> Option<&str> {
        match self {
            Label::Gold { sql } | Label::Pseudo { sql, .. } => Some(sql),
            Label::None => None,
        }
    }

    pub fn confidence(&self) -> Option<f64> {
        match self {
            Label::Pseudo { confidence, .. } => Some(*confidence),
            _ => None,
        }
    }
}

/// One natural-language question over one database, optionally labelled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub db_id: String,
    pub question: String,
    pub nlq: Vec<String>,
    pub label: Label,
    pub origin_task: Option<usize>,
    pub split: SplitTag,
}

impl Instance {
    pub fn sql(&self) -> Option<&str> {
        self.label.sql()
    }

    pub fn label_kind(&self) -> LabelKind {
        self.label.kind()
    }

    /// Copy of this instance with its label removed.
    pub fn unlabeled(&self) -> Instance {
        Instance {
            label: Label::None,
            ..self.clone()
        }
    }

    /// Copy of this instance carrying a predicted SQL and its confidence.
    pub fn with_pseudo(&self, sql: impl Into<String>, confidence: f64) -> Result<Instance, CorpusError> {
        Ok(Instance {
            label: Label::pseudo(sql, confidence)?,
            ..self.clone()
        })
    }
}

/// Lowercase and split on whitespace and punctuation. Numbers (including decimals)
/// and quoted strings stay single tokens; quoted strings keep their quotes and case.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let prev_is_word = i > 0 && chars[i - 1].is_alphanumeric();
        if (c == '\'' || c == '"') && !prev_is_word {
            if let Some(end) = chars[i + 1..].iter().position(|&d| d == c) {
                let tok: String = chars[i..i + end + 2].iter().collect();
                out.push(tok);
                i += end + 2;
                continue;
            }
            i += 1;
            continue;
        }
        if c.is_alphanumeric() || c == '_' {
            let start = i;
            while i < chars.len() {
                let d = chars[i];
                let decimal_point = d == '.'
                    && i + 1 < chars.len()
                    && chars[i + 1].is_ascii_digit()
                    && chars[start..i].iter().all(|x| x.is_ascii_digit());
                if d.is_alphanumeric() || d == '_' || decimal_point {
                    i += 1;
                } else {
                    break;
                }
            }
            let tok: String = chars[start..i].iter().collect();
            out.push(tok.to_lowercase());
            continue;
        }
        i += 1;
    }
    out
}

/// True for tokens that [`tokenize`] produced from a numeric or quoted literal.
pub fn is_literal_token(tok: &str) -> bool {
    is_quoted_token(tok) || is_numeric_token(tok)
}

pub fn is_quoted_token(tok: &str) -> bool {
    tok.len() >= 2
        && ((tok.starts_with('\'') && tok.ends_with('\''))
            || (tok.starts_with('"') && tok.ends_with('"')))
}

pub fn is_numeric_token(tok: &str) -> bool {
    !tok.is_empty()
        && tok.chars().next().is_some_and(|c| c.is_ascii_digit())
        && tok.chars().all(|c| c.is_ascii_digit() || c == '.')
        && tok.matches('.').count() <= 1
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub schemas: BTreeMap<String, Schema>,
    pub instances: Vec<Instance>,
}

#[derive(Deserialize)]
struct RawColumn {
    table: usize,
    name: String,
    #[serde(rename = "type", default)]
    ty: Option<String>,
}

#[derive(Deserialize)]
struct RawSchema {
    db_id: String,
    tables: Vec<String>,
    #[serde(default)]
    columns: Vec<RawColumn>,
}

#[derive(Deserialize)]
struct RawExample {
    id: String,
    db_id: String,
    question: String,
    query: Option<String>,
    split: SplitTag,
}

fn parse_records<T: for<'de> Deserialize<'de>>(
    file: &str,
    text: &str,
) -> Result<Vec<T>, CorpusError> {
    let values: Vec<serde_json::Value> =
        serde_json::from_str(text).map_err(|e| CorpusError::Document {
            file: file.to_string(),
            message: e.to_string(),
        })?;
    values
        .into_iter()
        .enumerate()
        .map(|(index, v)| {
            serde_json::from_value(v).map_err(|e| CorpusError::Record {
                file: file.to_string(),
                index,
                message: e.to_string(),
            })
        })
        .collect()
}

impl Corpus {
    /// Parse a corpus from the two JSON documents.
    pub fn from_json(schema_json: &str, examples_json: &str) -> Result<Self, CorpusError> {
        let raw_schemas: Vec<RawSchema> = parse_records("schemas", schema_json)?;
        let mut schemas = BTreeMap::new();
        for (index, raw) in raw_schemas.into_iter().enumerate() {
            let columns = raw
                .columns
                .into_iter()
                .map(|c| Column {
                    table: c.table,
                    name: c.name,
                    ty: c.ty.as_deref().map_or(ColumnType::Other, ColumnType::parse),
                })
                .collect();
            let schema = Schema::new(raw.db_id, raw.tables, columns).map_err(|message| {
                CorpusError::Record {
                    file: "schemas".into(),
                    index,
                    message,
                }
            })?;
            if schemas.contains_key(&schema.db_id) {
                return Err(CorpusError::Duplicate {
                    what: "db_id",
                    id: schema.db_id,
                });
            }
            schemas.insert(schema.db_id.clone(), schema);
        }

        let raw_examples: Vec<RawExample> = parse_records("examples", examples_json)?;
        let mut seen = HashSet::new();
        let mut instances = Vec::with_capacity(raw_examples.len());
        for raw in raw_examples {
            if !schemas.contains_key(&raw.db_id) {
                return Err(CorpusError::Reference {
                    db_id: raw.db_id,
                    referrer: format!("example `{}`", raw.id),
                });
            }
            if !seen.insert(raw.id.clone()) {
                return Err(CorpusError::Duplicate {
                    what: "instance id",
                    id: raw.id,
                });
            }
            let label = match raw.query {
                Some(sql) if !sql.trim().is_empty() => Label::Gold { sql },
                _ => Label::None,
            };
            instances.push(Instance {
                nlq: tokenize(&raw.question),
                id: raw.id,
                db_id: raw.db_id,
                question: raw.question,
                label,
                origin_task: None,
                split: raw.split,
            });
        }
        Ok(Corpus { schemas, instances })
    }
}

/// Load a corpus from a schema file and an examples file.
pub fn load_corpus(schema_path: &Path, examples_path: &Path) -> Result<Corpus, CorpusError> {
    let read = |p: &Path| {
        fs::read_to_string(p).map_err(|source| CorpusError::Io {
            path: p.display().to_string(),
            source,
        })
    };
    Corpus::from_json(&read(schema_path)?, &read(examples_path)?)
}

/// Cap on the labelled set: one value for every task, or one per task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabeledCap {
    Uniform(usize),
    PerTask(Vec<usize>),
}

impl LabeledCap {
    fn for_group(&self, g: usize) -> usize {
        match self {
            LabeledCap::Uniform(c) => *c,
            LabeledCap::PerTask(v) => v[g],
        }
    }
}

/// Database-to-task grouping. `seed`, when set, overrides the run-derived split seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub groups: Vec<Vec<String>>,
    pub labeled_cap: LabeledCap,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    /// 1-based position in the stream.
    pub index: usize,
    pub dbs: BTreeSet<String>,
    pub labeled: Vec<Instance>,
    pub unlabeled: Vec<Instance>,
    pub valid: Vec<Instance>,
    pub test: Vec<Instance>,
}

impl Task {
    /// Databases that appear in the labelled set.
    pub fn labeled_dbs(&self) -> BTreeSet<&str> {
        self.labeled.iter().map(|a| a.db_id.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStream {
    pub tasks: Vec<Task>,
    pub schemas: BTreeMap<String, Schema>,
}

impl TaskStream {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn schema(&self, db_id: &str) -> Option<&Schema> {
        self.schemas.get(db_id)
    }

    /// Task `i`, 1-based.
    pub fn task(&self, i: usize) -> &Task {
        &self.tasks[i - 1]
    }
}

/// Cut a corpus into a task stream.
///
/// Within each group the training questions are shuffled with a seed derived from
/// `seed` and the group position; the first `labeled_cap` questions that have SQL
/// become the labelled set and every other training question becomes unlabelled.
/// The group with the largest labelled set is moved to the front of the stream.
pub fn build_task_stream(
    corpus: &Corpus,
    split: &SplitConfig,
    seed: u64,
) -> Result<TaskStream, CorpusError> {
    let seed = split.seed.unwrap_or(seed);
    if split.k == 0 {
        return Err(CorpusError::Config("K must be at least 1".into()));
    }
    if split.groups.len() != split.k {
        return Err(CorpusError::Config(format!(
            "K = {} but {} database groups given",
            split.k,
            split.groups.len()
        )));
    }
    if let LabeledCap::PerTask(caps) = &split.labeled_cap {
        if caps.len() != split.k {
            return Err(CorpusError::Config(format!(
                "{} labeled caps given for K = {}",
                caps.len(),
                split.k
            )));
        }
    }
    let mut owner: BTreeMap<&str, usize> = BTreeMap::new();
    for (g, group) in split.groups.iter().enumerate() {
        if group.is_empty() {
            return Err(CorpusError::Config(format!("group {} is empty", g + 1)));
        }
        for db in group {
            if !corpus.schemas.contains_key(db) {
                return Err(CorpusError::Reference {
                    db_id: db.clone(),
                    referrer: format!("split group {}", g + 1),
                });
            }
            if let Some(prev) = owner.insert(db, g) {
                return Err(CorpusError::Config(format!(
                    "database `{db}` appears in groups {} and {}",
                    prev + 1,
                    g + 1
                )));
            }
        }
    }

    let mut tasks = Vec::with_capacity(split.k);
    for (g, group) in split.groups.iter().enumerate() {
        let dbs: BTreeSet<String> = group.iter().cloned().collect();
        let mut train: Vec<&Instance> = Vec::new();
        let mut valid = Vec::new();
        let mut test = Vec::new();
        for inst in corpus.instances.iter().filter(|x| dbs.contains(&x.db_id)) {
            match inst.split {
                SplitTag::Train => train.push(inst),
                SplitTag::Valid => valid.push(inst.clone()),
                SplitTag::Test => {
                    if inst.sql().is_none() {
                        return Err(CorpusError::Config(format!(
                            "test instance `{}` has no query",
                            inst.id
                        )));
                    }
                    test.push(inst.clone());
                }
            }
        }
        if test.is_empty() {
            return Err(CorpusError::Config(format!(
                "group {} has an empty test set",
                g + 1
            )));
        }
        train.shuffle(&mut seed::rng(seed, "split", g as u64));
        let cap = split.labeled_cap.for_group(g);
        let mut labeled = Vec::new();
        let mut unlabeled = Vec::new();
        for inst in train {
            if labeled.len() < cap && inst.label_kind() == LabelKind::Gold {
                labeled.push(inst.clone());
            } else {
                unlabeled.push(inst.unlabeled());
            }
        }
        valid.retain(|v: &Instance| v.sql().is_some());
        tasks.push(Task {
            index: 0,
            dbs,
            labeled,
            unlabeled,
            valid,
            test,
        });
    }

    // Largest labelled set first; ties keep configuration order.
    let first = (0..tasks.len())
        .max_by(|&a, &b| {
            tasks[a]
                .labeled
                .len()
                .cmp(&tasks[b].labeled.len())
                .then(b.cmp(&a))
        })
        .unwrap_or(0);
    let lead = tasks.remove(first);
    tasks.insert(0, lead);

    for (i, task) in tasks.iter_mut().enumerate() {
        task.index = i + 1;
        for inst in task
            .labeled
            .iter_mut()
            .chain(task.unlabeled.iter_mut())
            .chain(task.valid.iter_mut())
            .chain(task.test.iter_mut())
        {
            inst.origin_task = Some(i + 1);
        }
    }

    let stream = TaskStream {
        tasks,
        schemas: corpus.schemas.clone(),
    };
    for task in &stream.tasks {
        if zero_shot_count(task, &stream.schemas) == 0 {
            return Err(CorpusError::Config(format!(
                "task {} has no test instance on a database or table unseen in its labeled set",
                task.index
            )));
        }
    }
    Ok(stream)
}

/// Per-task set sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskStats {
    pub task: usize,
    pub labeled: usize,
    pub unlabeled: usize,
    pub valid: usize,
    pub test: usize,
    pub zero_shot: usize,
}

impl fmt::Display for TaskStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:>4} {:>8} {:>10} {:>6} {:>6} {:>10}",
            self.task, self.labeled, self.unlabeled, self.valid, self.test, self.zero_shot
        )
    }
}

/// Test instances whose database, or any table their gold SQL touches, never occurs
/// in the task's labelled set.
pub fn zero_shot_count(task: &Task, schemas: &BTreeMap<String, Schema>) -> usize {
    let mut seen: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    for a in &task.labeled {
        let tables = seen.entry(a.db_id.as_str()).or_default();
        if let (Some(sql), Some(schema)) = (a.sql(), schemas.get(&a.db_id)) {
            tables.extend(sqlrep::referenced_tables(sql, schema));
        }
    }
    task.test
        .iter()
        .filter(|t| match seen.get(t.db_id.as_str()) {
            None => true,
            Some(tables) => match (t.sql(), schemas.get(&t.db_id)) {
                (Some(sql), Some(schema)) => sqlrep::referenced_tables(sql, schema)
                    .iter()
                    .any(|tb| !tables.contains(tb)),
                _ => false,
            },
        })
        .count()
}

pub fn stream_stats(stream: &TaskStream) -> Vec<TaskStats> {
    stream
        .tasks
        .iter()
        .map(|t| TaskStats {
            task: t.index,
            labeled: t.labeled.len(),
            unlabeled: t.unlabeled.len(),
            valid: t.valid.len(),
            test: t.test.len(),
            zero_shot: zero_shot_count(t, &stream.schemas),
        })
        .collect()
}
