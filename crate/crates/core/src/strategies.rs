//! Training procedures over a task stream.
//!
//! Every procedure trains one task at a time and fills one column of the accuracy
//! grid after each task. [`Session`] holds what a run accumulates besides the model:
//! the growing schema vocabulary, the audit log, and the visit counter. Its methods
//! are the building blocks (warm start, one self-updating epoch, the teacher and
//! student objectives) and can be driven directly.
//!
//! Sub-seeds are derived from the run seed by stage name and task/epoch position, so
//! changing one stage's randomness does not perturb another's.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, Instance, LabelKind, Schema, TaskStream};
use crate::distance::{DistanceError, HashedInstance, InstanceHasher, RelevanceMode};
use crate::learner::{Checkpoint, EpochReport, LearnerError, Parser, ReferenceParser, TermKind, TermTally, WeightedExample};
use crate::metrics::{evaluate, AccMatrix, MetricsError, MetricsReport};
use crate::par::{self, ExecMode};
use crate::sampling::{
    prompt_sample, random_sample, review_sample, schema_clus_sample, schema_sim_sample, SamplerConfig,
    SamplingError, StudentSampler, TeacherSampler,
};
use crate::seed;
use crate::sqlrep::{skeletonize, SchemaHashSource, SchemaVocab};

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("task {0} has no labelled instances")]
    EmptyLabeled(usize),
    #[error("invalid strategy config: {0}")]
    Config(String),
    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
    #[error("memory for task {task} would hold {size} entries, capacity {capacity}")]
    MemoryOverflow { task: usize, size: usize, capacity: usize },
    #[error("instance `{id}` references unknown database `{db_id}`")]
    MissingSchema { id: String, db_id: String },
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

type Result<T, E = StrategyError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidUsage {
    /// Fixed epoch counts; validation sets are ignored.
    #[default]
    None,
    /// Keep the best epoch by validation accuracy; stop after `patience` epochs
    /// without improvement.
    EarlyStop,
}

/// How the untrained reference accuracies are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomBaseline {
    /// Untrained parser whose catalog holds the first task's skeletons.
    #[default]
    UniformCatalog,
    /// Untrained parser with an empty catalog, which scores 0 everywhere.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfig {
    pub seed: u64,
    pub warm_epochs: usize,
    pub self_epochs: usize,
    /// Student epochs per task; defaults to `warm_epochs + self_epochs`.
    pub student_epochs: Option<usize>,
    /// Pseudo-labelled instances drawn per self-updating epoch.
    pub pseudo_count: usize,
    /// Memory size per task as a fraction of the task's training size.
    pub memory_fraction: f64,
    /// Upper bound on any per-task memory.
    pub memory_cap: Option<usize>,
    /// Relevance pool size as a multiple of the teacher memory size.
    pub pool_multiplier: usize,
    pub lr: f64,
    pub feature_dim: usize,
    pub valid_usage: ValidUsage,
    pub patience: usize,
    pub relevance_mode: RelevanceMode,
    pub schema_hash_source: SchemaHashSource,
    pub teacher_sampler: TeacherSampler,
    pub student_sampler: StudentSampler,
    pub random_baseline: RandomBaseline,
    #[serde(skip)]
    pub exec: ExecMode,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            seed: 0,
            warm_epochs: 10,
            self_epochs: 10,
            student_epochs: None,
            pseudo_count: 64,
            memory_fraction: 0.3,
            memory_cap: None,
            pool_multiplier: 3,
            lr: 0.1,
            feature_dim: 1 << 16,
            valid_usage: ValidUsage::None,
            patience: 3,
            relevance_mode: RelevanceMode::DefaultMin,
            schema_hash_source: SchemaHashSource::Schema,
            teacher_sampler: TeacherSampler::Prompt,
            student_sampler: StudentSampler::Review,
            random_baseline: RandomBaseline::UniformCatalog,
            exec: ExecMode::default(),
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(StrategyError::Config(m.to_string()));
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad("lr must be finite and non-negative");
        }
        if !(self.memory_fraction > 0.0 && self.memory_fraction <= 1.0) {
            return bad("memory_fraction must be in (0, 1]");
        }
        if self.pool_multiplier == 0 {
            return bad("pool_multiplier must be positive");
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive");
        }
        if self.memory_cap == Some(0) {
            return bad("memory_cap must be positive");
        }
        if self.valid_usage == ValidUsage::EarlyStop && self.patience == 0 {
            return bad("patience must be positive with early stopping");
        }
        Ok(())
    }

    pub fn student_epochs(&self) -> usize {
        self.student_epochs.unwrap_or(self.warm_epochs + self.self_epochs)
    }

    /// Per-task memory size: `memory_fraction` of the training size, rounded, at
    /// least 1, at most `memory_cap`.
    pub fn memory_size(&self, train_size: usize) -> usize {
        let m = ((self.memory_fraction * train_size as f64).round() as usize).max(1);
        self.memory_cap.map_or(m, |c| m.min(c))
    }

    pub fn sampler_config(&self, train_size: usize) -> SamplerConfig {
        let n = self.memory_size(train_size);
        SamplerConfig {
            teacher_size: n,
            pool_size: self.pool_multiplier * n,
            student_size: n,
            relevance_mode: self.relevance_mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    FineTune,
    SelfTraining,
    Vanilla,
    SfNet,
    Oracle,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::FineTune,
        StrategyKind::SelfTraining,
        StrategyKind::Vanilla,
        StrategyKind::SfNet,
        StrategyKind::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::FineTune => "finetune",
            StrategyKind::SelfTraining => "self_training",
            StrategyKind::Vanilla => "vanilla",
            StrategyKind::SfNet => "sfnet",
            StrategyKind::Oracle => "oracle",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| StrategyError::UnknownStrategy(s.to_string()))
    }
}

/// Which model a record is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Learner,
    Teacher,
    Student,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Warm,
    SelfUpdate,
    Student,
    Retrain,
}

/// Data a training phase read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSet {
    Labeled,
    Unlabeled,
    Pseudo,
    Memory,
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Store {
    Vanilla,
    Teacher,
    Student,
}

/// One line of the audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum AuditEvent {
    Access {
        task: usize,
        role: Role,
        phase: Phase,
        set: DataSet,
        count: usize,
    },
    Terms {
        task: usize,
        role: Role,
        phase: Phase,
        epoch: usize,
        total: usize,
        terms: BTreeMap<TermKind, TermTally>,
    },
    /// Exemplars written to a memory.
    Memory {
        task: usize,
        store: Store,
        ids: Vec<String>,
        pseudo: usize,
        fingerprint: String,
    },
    /// A stored memory read during task `task`.
    Replay {
        task: usize,
        store: Store,
        stored_task: usize,
        count: usize,
        fingerprint: String,
    },
    /// Teacher restored from the student checkpoint; `agree` records whether the two
    /// predict identically on the task's questions before training.
    Restore {
        task: usize,
        checkpoint: String,
        agree: bool,
    },
    Sampling {
        task: usize,
        sampler: String,
        requested: usize,
        chosen: usize,
        warnings: Vec<String>,
    },
    EarlyStop {
        task: usize,
        role: Role,
        phase: Phase,
        best_epoch: usize,
        best_accuracy: f64,
    },
    Warning {
        task: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub events: Vec<AuditEvent>,
}

impl Audit {
    pub fn push(&mut self, e: AuditEvent) {
        self.events.push(e);
    }

    /// Line-delimited JSON, one event per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("audit event serializes"));
            out.push('\n');
        }
        out
    }

    pub fn terms(&self) -> impl Iterator<Item = (usize, Role, Phase, usize, &BTreeMap<TermKind, TermTally>)> {
        self.events.iter().filter_map(|e| match e {
            AuditEvent::Terms {
                task,
                role,
                phase,
                epoch,
                terms,
                ..
            } => Some((*task, *role, *phase, *epoch, terms)),
            _ => None,
        })
    }
}

fn fingerprint(entries: &[Instance]) -> String {
    let bytes = serde_json::to_vec(entries).expect("instances serialize");
    format!("{:016x}", seed::fnv1a(&bytes))
}

/// Per-task exemplar lists. Entries are owned copies and are never modified.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemoryStore {
    tasks: BTreeMap<usize, (usize, Vec<Instance>)>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Store the memory of `task`; a task can be written once.
    pub fn insert(&mut self, task: usize, capacity: usize, entries: Vec<Instance>) -> Result<()> {
        if entries.len() > capacity {
            return Err(StrategyError::MemoryOverflow {
                task,
                size: entries.len(),
                capacity,
            });
        }
        if self.tasks.contains_key(&task) {
            return Err(StrategyError::Config(format!("memory for task {task} written twice")));
        }
        self.tasks.insert(task, (capacity, entries));
        Ok(())
    }

    pub fn get(&self, task: usize) -> Option<&[Instance]> {
        self.tasks.get(&task).map(|(_, v)| v.as_slice())
    }

    pub fn capacity(&self, task: usize) -> Option<usize> {
        self.tasks.get(&task).map(|(c, _)| *c)
    }

    pub fn tasks(&self) -> impl Iterator<Item = (usize, &[Instance])> {
        self.tasks.iter().map(|(t, (_, v))| (*t, v.as_slice()))
    }

    pub fn fingerprint(&self, task: usize) -> Option<String> {
        self.get(task).map(fingerprint)
    }

    pub fn len(&self) -> usize {
        self.tasks.values().map(|(_, v)| v.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskTiming {
    pub task: usize,
    /// Training time including sampling, excluding evaluation.
    pub train_seconds: f64,
    pub sampling_seconds: f64,
    pub eval_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDiagnostics {
    pub task: usize,
    pub catalog_len: usize,
    /// Test instances of this task whose gold skeleton never appeared in training.
    pub unseen_test_skeletons: usize,
    /// Instances in the training set of this task (Oracle: the union so far).
    pub trained_instances: usize,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub strategy: String,
    pub seed: u64,
    pub matrix: AccMatrix,
    pub report: MetricsReport,
    pub timing: Vec<TaskTiming>,
    pub audit: Audit,
    /// Example presentations summed over every training epoch of the run.
    pub visits: u64,
    pub diagnostics: Vec<TaskDiagnostics>,
    pub config: StrategyConfig,
}

/// Early-stopping bookkeeping for one training phase.
struct EarlyStopper {
    enabled: bool,
    patience: usize,
    best: Option<(f64, usize, Checkpoint)>,
    stale: usize,
}

impl EarlyStopper {
    fn new(cfg: &StrategyConfig, valid: &[Instance]) -> Self {
        EarlyStopper {
            enabled: cfg.valid_usage == ValidUsage::EarlyStop && !valid.is_empty(),
            patience: cfg.patience,
            best: None,
            stale: 0,
        }
    }

    /// Returns true when training should stop.
    fn observe<P: Parser + ?Sized>(
        &mut self,
        parser: &P,
        valid: &[Instance],
        schemas: &BTreeMap<String, Schema>,
        mode: ExecMode,
        epoch: usize,
    ) -> Result<bool> {
        if !self.enabled {
            return Ok(false);
        }
        let acc = evaluate(parser, valid, schemas, mode)?.accuracy();
        if self.best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
            self.best = Some((acc, epoch, parser.snapshot()));
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        Ok(self.stale >= self.patience)
    }

    /// Restore the best epoch; returns (epoch, accuracy) if early stopping was active.
    fn finish<P: Parser + ?Sized>(self, parser: &mut P) -> Result<Option<(usize, f64)>> {
        match self.best {
            Some((acc, epoch, ck)) => {
                parser.restore(&ck)?;
                Ok(Some((epoch, acc)))
            }
            None => Ok(None),
        }
    }
}

/// State shared by the steps of one run.
pub struct Session<'s> {
    pub stream: &'s TaskStream,
    pub cfg: &'s StrategyConfig,
    pub audit: Audit,
    pub visits: u64,
    vocab: SchemaVocab,
    seen_skeletons: BTreeSet<String>,
}

impl<'s> Session<'s> {
    pub fn new(stream: &'s TaskStream, cfg: &'s StrategyConfig) -> Self {
        Session {
            stream,
            cfg,
            audit: Audit::default(),
            visits: 0,
            vocab: SchemaVocab::new(),
            seen_skeletons: BTreeSet::new(),
        }
    }

    fn schemas(&self) -> &'s BTreeMap<String, Schema> {
        &self.stream.schemas
    }

    fn schema_of(&self, inst: &Instance) -> Result<&'s Schema> {
        self.stream
            .schemas
            .get(&inst.db_id)
            .ok_or_else(|| StrategyError::MissingSchema {
                id: inst.id.clone(),
                db_id: inst.db_id.clone(),
            })
    }

    fn sub_seed(&self, label: &str, task: usize, epoch: usize) -> u64 {
        seed::derive(self.cfg.seed, label, (task as u64) << 32 | epoch as u64)
    }

    /// Loss terms for `insts`: pseudo instances of kind `Pseudo` carry their
    /// confidence, everything else weight 1.
    pub fn terms<'a>(&self, insts: &'a [Instance], kind: TermKind) -> Result<Vec<WeightedExample<'a>>>
    where
        's: 'a,
    {
        insts
            .iter()
            .map(|inst| {
                let schema = self.schema_of(inst)?;
                let w = match kind {
                    TermKind::Pseudo => inst.label.confidence().unwrap_or(1.0),
                    _ => 1.0,
                };
                Ok(WeightedExample::new(inst, schema, w, kind)?)
            })
            .collect()
    }

    fn access(&mut self, task: usize, role: Role, phase: Phase, set: DataSet, count: usize) {
        self.audit.push(AuditEvent::Access {
            task,
            role,
            phase,
            set,
            count,
        });
    }

    fn note_skeletons(&mut self, examples: &[WeightedExample<'_>]) {
        for ex in examples {
            if let Ok(sk) = skeletonize(ex.sql(), ex.schema) {
                self.seen_skeletons.insert(sk.to_string());
            }
        }
    }

    /// Register, train one epoch, and record the term tally.
    fn epoch<P: Parser + ?Sized>(
        &mut self,
        parser: &mut P,
        examples: &[WeightedExample<'_>],
        task: usize,
        role: Role,
        phase: Phase,
        epoch: usize,
    ) -> Result<EpochReport> {
        parser.register(examples)?;
        self.note_skeletons(examples);
        let label = match phase {
            Phase::Warm => "warm",
            Phase::SelfUpdate => "self",
            Phase::Student => "student",
            Phase::Retrain => "retrain",
        };
        let report = parser.train_epoch(examples, self.cfg.lr, self.sub_seed(label, task, epoch))?;
        self.visits += examples.len() as u64;
        self.audit.push(AuditEvent::Terms {
            task,
            role,
            phase,
            epoch,
            total: examples.len(),
            terms: report.terms.clone(),
        });
        Ok(report)
    }

    fn early_stop_event(&mut self, task: usize, role: Role, phase: Phase, r: Option<(usize, f64)>) {
        if let Some((best_epoch, best_accuracy)) = r {
            self.audit.push(AuditEvent::EarlyStop {
                task,
                role,
                phase,
                best_epoch,
                best_accuracy,
            });
        }
    }

    /// Train `epochs` passes over the labelled set of `task` only.
    pub fn warm_start<P: Parser + ?Sized>(&mut self, parser: &mut P, task: usize, role: Role, epochs: usize) -> Result<()> {
        let t = self.stream.task(task);
        if t.labeled.is_empty() {
            return Err(StrategyError::EmptyLabeled(task));
        }
        let examples = self.terms(&t.labeled, TermKind::Gold)?;
        parser.register(&examples)?;
        self.note_skeletons(&examples);
        if epochs > 0 {
            self.access(task, role, Phase::Warm, DataSet::Labeled, t.labeled.len());
        }
        for e in 0..epochs {
            self.epoch(parser, &examples, task, role, Phase::Warm, e)?;
        }
        Ok(())
    }

    /// Predict every unlabelled question of `task` and draw `pseudo_count` of them.
    pub fn pseudo_label<P: Parser + ?Sized>(&mut self, parser: &P, task: usize, epoch: usize) -> Result<Vec<Instance>> {
        let t = self.stream.task(task);
        let k = self.cfg.pseudo_count;
        if k == 0 || t.unlabeled.is_empty() {
            return Ok(Vec::new());
        }
        if k > t.unlabeled.len() && epoch == 0 {
            let message = format!(
                "pseudo_count {k} exceeds the {} unlabelled instances of task {task}; using all",
                t.unlabeled.len()
            );
            log::warn!("{message}");
            self.audit.push(AuditEvent::Warning { task, message });
        }
        let chosen = random_sample(t.unlabeled.len(), k, self.sub_seed("pseudo", task, epoch));
        let picked: Vec<&Instance> = chosen.iter().map(|&i| &t.unlabeled[i]).collect();
        let schemas = self.schemas();
        par::try_map(self.cfg.exec, &picked, |u| -> Result<Instance> {
            let schema = schemas.get(&u.db_id).ok_or_else(|| StrategyError::MissingSchema {
                id: u.id.clone(),
                db_id: u.db_id.clone(),
            })?;
            let p = parser.predict(&u.nlq, schema)?;
            Ok(u.with_pseudo(p.sql, p.confidence)?)
        })
    }

    /// One self-updating epoch: fresh pseudo labels, then one pass over the labelled
    /// set (weight 1), the drawn pseudo labels (weight μ) and `memory` (weight 1).
    /// Returns the epoch's tally and its pseudo-label set.
    pub fn self_update_epoch<P: Parser + ?Sized>(
        &mut self,
        parser: &mut P,
        task: usize,
        role: Role,
        epoch: usize,
        memory: &[Instance],
    ) -> Result<(EpochReport, Vec<Instance>)> {
        let t = self.stream.task(task);
        let pseudo = self.pseudo_label(parser, task, epoch)?;
        self.access(task, role, Phase::SelfUpdate, DataSet::Labeled, t.labeled.len());
        if !t.unlabeled.is_empty() && self.cfg.pseudo_count > 0 {
            self.access(task, role, Phase::SelfUpdate, DataSet::Unlabeled, t.unlabeled.len());
        }
        if !memory.is_empty() {
            self.access(task, role, Phase::SelfUpdate, DataSet::Memory, memory.len());
        }
        let mut examples = self.terms(&t.labeled, TermKind::Gold)?;
        examples.extend(self.terms(&pseudo, TermKind::Pseudo)?);
        examples.extend(self.terms(memory, TermKind::Memory)?);
        let report = self.epoch(parser, &examples, task, role, Phase::SelfUpdate, epoch)?;
        Ok((report, pseudo))
    }

    /// Warm start followed by `self_epochs` self-updating epochs replaying `memory`.
    /// Returns the pseudo-label set of the final (or best) epoch.
    pub fn self_train<P: Parser + ?Sized>(
        &mut self,
        parser: &mut P,
        task: usize,
        role: Role,
        memory: &[Instance],
    ) -> Result<Vec<Instance>> {
        self.warm_start(parser, task, role, self.cfg.warm_epochs)?;
        let valid = &self.stream.task(task).valid;
        let mut stopper = EarlyStopper::new(self.cfg, valid);
        let mut pseudo_by_epoch = Vec::new();
        for e in 0..self.cfg.self_epochs {
            let (_, pseudo) = self.self_update_epoch(parser, task, role, e, memory)?;
            pseudo_by_epoch.push(pseudo);
            if stopper.observe(parser, valid, self.schemas(), self.cfg.exec, e)? {
                break;
            }
        }
        let best = stopper.finish(parser)?;
        self.early_stop_event(task, role, Phase::SelfUpdate, best);
        let keep = best.map_or(pseudo_by_epoch.len().saturating_sub(1), |(e, _)| e);
        Ok(pseudo_by_epoch.into_iter().nth(keep).unwrap_or_default())
    }

    /// Student objective for `task`: the labelled set and the teacher's pseudo labels
    /// at weight 1, plus `memory` at weight 1.
    pub fn student_train<P: Parser + ?Sized>(
        &mut self,
        parser: &mut P,
        task: usize,
        pseudo: &[Instance],
        memory: &[Instance],
    ) -> Result<()> {
        let t = self.stream.task(task);
        if t.labeled.is_empty() {
            return Err(StrategyError::EmptyLabeled(task));
        }
        let epochs = self.cfg.student_epochs();
        if epochs > 0 {
            self.access(task, Role::Student, Phase::Student, DataSet::Labeled, t.labeled.len());
            if !pseudo.is_empty() {
                self.access(task, Role::Student, Phase::Student, DataSet::Pseudo, pseudo.len());
            }
            if !memory.is_empty() {
                self.access(task, Role::Student, Phase::Student, DataSet::Memory, memory.len());
            }
        }
        let mut examples = self.terms(&t.labeled, TermKind::Gold)?;
        examples.extend(self.terms(pseudo, TermKind::Distilled)?);
        examples.extend(self.terms(memory, TermKind::Memory)?);
        let mut stopper = EarlyStopper::new(self.cfg, &t.valid);
        for e in 0..epochs {
            self.epoch(parser, &examples, task, Role::Student, Phase::Student, e)?;
            if stopper.observe(parser, &t.valid, self.schemas(), self.cfg.exec, e)? {
                break;
            }
        }
        let best = stopper.finish(parser)?;
        self.early_stop_event(task, Role::Student, Phase::Student, best);
        Ok(())
    }

    /// Labelled-only training for `epochs` passes over `labeled`.
    fn supervised<P: Parser + ?Sized>(
        &mut self,
        parser: &mut P,
        task: usize,
        phase: Phase,
        labeled: &[Instance],
        epochs: usize,
    ) -> Result<()> {
        if labeled.is_empty() {
            return Err(StrategyError::EmptyLabeled(task));
        }
        let examples = self.terms(labeled, TermKind::Gold)?;
        parser.register(&examples)?;
        self.note_skeletons(&examples);
        if epochs > 0 {
            self.access(task, Role::Learner, phase, DataSet::Labeled, labeled.len());
        }
        let valid = &self.stream.task(task).valid;
        let mut stopper = EarlyStopper::new(self.cfg, valid);
        for e in 0..epochs {
            self.epoch(parser, &examples, task, Role::Learner, phase, e)?;
            if stopper.observe(parser, valid, self.schemas(), self.cfg.exec, e)? {
                break;
            }
        }
        let best = stopper.finish(parser)?;
        self.early_stop_event(task, Role::Learner, phase, best);
        Ok(())
    }

    /// Extend Ψ with the schemas of `task` and return a hasher over the new snapshot.
    fn enter_task(&mut self, task: usize) -> InstanceHasher<'s> {
        for db in &self.stream.task(task).dbs {
            if let Some(s) = self.stream.schemas.get(db) {
                self.vocab.extend_with_schema(s);
            }
        }
        InstanceHasher::new(&self.stream.schemas, self.vocab.snapshot(), self.cfg.schema_hash_source)
    }

    fn hash(&self, hasher: &InstanceHasher<'_>, insts: &[Instance]) -> Result<Vec<HashedInstance>> {
        Ok(hasher.hash_all(self.cfg.exec, insts)?)
    }

    fn sampling_event(&mut self, task: usize, sampler: &str, requested: usize, chosen: usize, warnings: Vec<String>) {
        self.audit.push(AuditEvent::Sampling {
            task,
            sampler: sampler.to_string(),
            requested,
            chosen,
            warnings,
        });
    }

    /// Teacher memory for `task` drawn from the past pool.
    pub fn teacher_memory(&mut self, hasher: &InstanceHasher<'_>, task: usize, past: &[Instance]) -> Result<Vec<Instance>> {
        let t = self.stream.task(task);
        let sc = self.cfg.sampler_config(t.labeled.len() + t.unlabeled.len());
        if past.is_empty() {
            return Ok(Vec::new());
        }
        // without unlabelled questions the labelled set stands in as the reference
        let reference = if t.unlabeled.is_empty() { &t.labeled } else { &t.unlabeled };
        let (name, sample) = match self.cfg.teacher_sampler {
            TeacherSampler::Prompt => {
                let past_h = self.hash(hasher, past)?;
                let cur_h = self.hash(hasher, reference)?;
                ("prompt", prompt_sample(&past_h, &cur_h, &sc, self.cfg.exec)?)
            }
            TeacherSampler::SchemaSim => {
                let past_h = self.hash(hasher, past)?;
                let cur_h = self.hash(hasher, reference)?;
                let s = schema_sim_sample(&past_h, &cur_h, sc.teacher_size, sc.relevance_mode, self.cfg.exec)?;
                ("schema_sim", s)
            }
            TeacherSampler::Random => {
                let idx = random_sample(past.len(), sc.teacher_size, self.sub_seed("teacher-random", task, 0));
                ("random", crate::sampling::Sample { indices: idx, ..Default::default() })
            }
        };
        self.sampling_event(task, name, sc.teacher_size, sample.indices.len(), sample.warnings);
        Ok(sample.indices.iter().map(|&i| past[i].clone()).collect())
    }

    /// Student memory for `task` drawn from its labelled and pseudo-labelled sets.
    pub fn student_memory(&mut self, hasher: &InstanceHasher<'_>, task: usize, pool: &[Instance]) -> Result<Vec<Instance>> {
        let t = self.stream.task(task);
        let m = self.cfg.memory_size(t.labeled.len() + t.unlabeled.len());
        let (name, sample) = match self.cfg.student_sampler {
            StudentSampler::Review => ("review", review_sample(&self.hash(hasher, pool)?, m, self.cfg.exec)?),
            StudentSampler::SchemaClus => ("schema_clus", schema_clus_sample(&self.hash(hasher, pool)?, m, self.cfg.exec)?),
            StudentSampler::Random => {
                let idx = random_sample(pool.len(), m, self.sub_seed("student-random", task, 0));
                ("random", crate::sampling::Sample { indices: idx, ..Default::default() })
            }
        };
        self.sampling_event(task, name, m, sample.indices.len(), sample.warnings);
        Ok(sample.indices.iter().map(|&i| pool[i].clone()).collect())
    }

    fn store(&mut self, store: &mut MemoryStore, kind: Store, task: usize, capacity: usize, entries: Vec<Instance>) -> Result<()> {
        let ids = entries.iter().map(|e| e.id.clone()).collect();
        let pseudo = entries.iter().filter(|e| e.label_kind() == LabelKind::Pseudo).count();
        let fp = fingerprint(&entries);
        store.insert(task, capacity, entries)?;
        self.audit.push(AuditEvent::Memory {
            task,
            store: kind,
            ids,
            pseudo,
            fingerprint: fp,
        });
        Ok(())
    }

    /// Concatenate the memories of tasks before `task`, logging each replayed store.
    fn replay(&mut self, store: &MemoryStore, kind: Store, task: usize) -> Vec<Instance> {
        let mut out = Vec::new();
        for (j, entries) in store.tasks().filter(|(j, _)| *j < task) {
            self.audit.push(AuditEvent::Replay {
                task,
                store: kind,
                stored_task: j,
                count: entries.len(),
                fingerprint: fingerprint(entries),
            });
            out.extend_from_slice(entries);
        }
        out
    }

    fn unseen_skeletons(&self, task: usize) -> usize {
        self.stream
            .task(task)
            .test
            .iter()
            .filter(|inst| {
                let (Some(sql), Ok(schema)) = (inst.sql(), self.schema_of(inst)) else {
                    return false;
                };
                skeletonize(sql, schema).is_ok_and(|sk| !self.seen_skeletons.contains(&sk.to_string()))
            })
            .count()
    }
}

/// Accuracy of the untrained parser on every test set.
fn baselines<P: Parser, F: Fn() -> P>(session: &mut Session<'_>, factory: &F) -> Result<Vec<f64>> {
    let stream = session.stream;
    match session.cfg.random_baseline {
        RandomBaseline::Zero => Ok(vec![0.0; stream.len()]),
        RandomBaseline::UniformCatalog => {
            let mut p = factory();
            let first = session.terms(&stream.task(1).labeled, TermKind::Gold)?;
            p.register(&first)?;
            stream
                .tasks
                .iter()
                .map(|t| Ok(evaluate(&p, &t.test, &stream.schemas, session.cfg.exec)?.accuracy()))
                .collect()
        }
    }
}

/// Fill column `after` of the grid: every task trained so far plus the next one.
fn evaluate_column<P: Parser + ?Sized>(session: &Session<'_>, parser: &P, m: &mut AccMatrix, after: usize) -> Result<()> {
    let stream = session.stream;
    for i in 1..=(after + 1).min(stream.len()) {
        let acc = evaluate(parser, &stream.task(i).test, &stream.schemas, session.cfg.exec)?.accuracy();
        m.set(i, after, acc)?;
    }
    Ok(())
}

fn check_stream(stream: &TaskStream) -> Result<()> {
    if stream.is_empty() {
        return Err(StrategyError::Config("empty task stream".into()));
    }
    for t in &stream.tasks {
        if t.labeled.is_empty() {
            return Err(StrategyError::EmptyLabeled(t.index));
        }
        if t.test.is_empty() {
            return Err(StrategyError::Metrics(MetricsError::EmptyTest(t.index)));
        }
    }
    Ok(())
}

/// Run one strategy with parsers built by `factory`.
pub fn run_with<P, F>(kind: StrategyKind, stream: &TaskStream, cfg: &StrategyConfig, factory: F) -> Result<RunResult>
where
    P: Parser,
    F: Fn() -> P,
{
    cfg.validate()?;
    check_stream(stream)?;
    let mut s = Session::new(stream, cfg);
    let baseline = baselines(&mut s, &factory)?;
    let mut matrix = AccMatrix::new(stream.tasks.iter().map(|t| t.test.len()).collect(), baseline)?;
    let mut timing = Vec::with_capacity(stream.len());
    let mut diagnostics = Vec::with_capacity(stream.len());

    let mut learner = factory();
    let mut vanilla_mem = MemoryStore::new();
    let mut student_mem = MemoryStore::new();
    let mut past_pool: Vec<Instance> = Vec::new();
    let mut oracle_union: Vec<Instance> = Vec::new();

    for i in 1..=stream.len() {
        let t = stream.task(i);
        let train_size = t.labeled.len() + t.unlabeled.len();
        let started = Instant::now();
        let mut sampling = 0.0;
        let mut trained = t.labeled.len() + t.unlabeled.len();
        let hasher = s.enter_task(i);
        match kind {
            StrategyKind::FineTune => {
                trained = t.labeled.len();
                s.supervised(&mut learner, i, Phase::Warm, &t.labeled, cfg.warm_epochs + cfg.self_epochs)?;
            }
            StrategyKind::SelfTraining => {
                s.self_train(&mut learner, i, Role::Learner, &[])?;
            }
            StrategyKind::Vanilla => {
                let memory = s.replay(&vanilla_mem, Store::Vanilla, i);
                s.self_train(&mut learner, i, Role::Learner, &memory)?;
                let m = cfg.memory_size(train_size);
                let chosen = random_sample(t.labeled.len(), m, s.sub_seed("vanilla-memory", i, 0));
                let entries = chosen.iter().map(|&j| t.labeled[j].clone()).collect();
                s.store(&mut vanilla_mem, Store::Vanilla, i, m, entries)?;
            }
            StrategyKind::SfNet => {
                let ck = learner.snapshot();
                let mut teacher = factory();
                teacher.restore(&ck)?;
                let agree = agree_on(&s, &teacher, &learner, i)?;
                s.audit.push(AuditEvent::Restore {
                    task: i,
                    checkpoint: format!("{:016x}", seed::fnv1a(ck.as_bytes())),
                    agree,
                });

                let clock = Instant::now();
                let m_tea = s.teacher_memory(&hasher, i, &past_pool)?;
                sampling += clock.elapsed().as_secs_f64();
                let pseudo = s.self_train(&mut teacher, i, Role::Teacher, &m_tea)?;

                let memory = s.replay(&student_mem, Store::Student, i);
                s.student_train(&mut learner, i, &pseudo, &memory)?;

                let mut pool = t.labeled.clone();
                pool.extend(pseudo.iter().cloned());
                let clock = Instant::now();
                let m_stu = s.student_memory(&hasher, i, &pool)?;
                sampling += clock.elapsed().as_secs_f64();
                let cap = cfg.memory_size(train_size);
                s.store(&mut student_mem, Store::Student, i, cap, m_stu)?;
                past_pool.extend(pool);
            }
            StrategyKind::Oracle => {
                oracle_union.extend(t.labeled.iter().cloned());
                trained = oracle_union.len();
                learner.reset();
                s.supervised(&mut learner, i, Phase::Retrain, &oracle_union, cfg.warm_epochs + cfg.self_epochs)?;
            }
        }
        let train_seconds = started.elapsed().as_secs_f64();
        let clock = Instant::now();
        evaluate_column(&s, &learner, &mut matrix, i)?;
        timing.push(TaskTiming {
            task: i,
            train_seconds,
            sampling_seconds: sampling,
            eval_seconds: clock.elapsed().as_secs_f64(),
        });
        diagnostics.push(TaskDiagnostics {
            task: i,
            catalog_len: learner.catalog_len(),
            unseen_test_skeletons: s.unseen_skeletons(i),
            trained_instances: trained,
        });
        log::info!("{kind} task {i}/{} done in {train_seconds:.3}s", stream.len());
    }

    let report = MetricsReport::from_matrix(&matrix)?;
    Ok(RunResult {
        strategy: kind.name().to_string(),
        seed: cfg.seed,
        matrix,
        report,
        timing,
        audit: s.audit,
        visits: s.visits,
        diagnostics,
        config: cfg.clone(),
    })
}

/// Whether two parsers predict identically on the questions of `task`.
fn agree_on<A: Parser, B: Parser>(s: &Session<'_>, a: &A, b: &B, task: usize) -> Result<bool> {
    let t = s.stream.task(task);
    for inst in t.unlabeled.iter().chain(&t.test) {
        let schema = s.schema_of(inst)?;
        let same = match (a.predict(&inst.nlq, schema), b.predict(&inst.nlq, schema)) {
            (Ok(x), Ok(y)) => x == y,
            (Err(LearnerError::NotTrained), Err(LearnerError::NotTrained)) => true,
            (Err(e), _) | (_, Err(e)) => return Err(e.into()),
        };
        if !same {
            return Ok(false);
        }
    }
    Ok(true)
}

fn reference(cfg: &StrategyConfig) -> impl Fn() -> ReferenceParser + '_ {
    move || ReferenceParser::new(cfg.feature_dim)
}

pub fn run_finetune(stream: &TaskStream, cfg: &StrategyConfig) -> Result<RunResult> {
    run_with(StrategyKind::FineTune, stream, cfg, reference(cfg))
}

pub fn run_self_training(stream: &TaskStream, cfg: &StrategyConfig) -> Result<RunResult> {
    run_with(StrategyKind::SelfTraining, stream, cfg, reference(cfg))
}

pub fn run_vanilla(stream: &TaskStream, cfg: &StrategyConfig) -> Result<RunResult> {
    run_with(StrategyKind::Vanilla, stream, cfg, reference(cfg))
}

pub fn run_sfnet(stream: &TaskStream, cfg: &StrategyConfig) -> Result<RunResult> {
    run_with(StrategyKind::SfNet, stream, cfg, reference(cfg))
}

pub fn run_oracle(stream: &TaskStream, cfg: &StrategyConfig) -> Result<RunResult> {
    run_with(StrategyKind::Oracle, stream, cfg, reference(cfg))
}

pub type RunFn = Box<dyn Fn(&TaskStream, &StrategyConfig) -> Result<RunResult> + Send + Sync>;

/// Strategies by name. Starts with the built-ins over the reference parser; other
/// parsers or procedures register under their own names.
pub struct Registry {
    entries: BTreeMap<String, RunFn>,
}

impl Default for Registry {
    fn default() -> Self {
        let mut r = Registry::empty();
        for kind in StrategyKind::ALL {
            r.register(kind.name(), move |stream, cfg| run_with(kind, stream, cfg, reference(cfg)));
        }
        r
    }
}

impl Registry {
    pub fn empty() -> Self {
        Registry {
            entries: BTreeMap::new(),
        }
    }

    /// Add or replace a strategy.
    pub fn register<F>(&mut self, name: &str, f: F)
    where
        F: Fn(&TaskStream, &StrategyConfig) -> Result<RunResult> + Send + Sync + 'static,
    {
        self.entries.insert(name.to_string(), Box::new(f));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn run(&self, name: &str, stream: &TaskStream, cfg: &StrategyConfig) -> Result<RunResult> {
        let f = self
            .entries
            .get(name)
            .ok_or_else(|| StrategyError::UnknownStrategy(name.to_string()))?;
        let mut result = f(stream, cfg)?;
        result.strategy = name.to_string();
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, Column, ColumnType, Label, SplitTag, Task};

    fn schema(db: &str, table: &str, cols: &[&str]) -> Schema {
        Schema::new(
            db,
            vec![table.into()],
            cols.iter()
                .map(|c| Column {
                    table: 0,
                    name: (*c).into(),
                    ty: ColumnType::Number,
                })
                .collect(),
        )
        .unwrap()
    }

    fn inst(id: &str, db: &str, q: &str, sql: Option<&str>, split: SplitTag) -> Instance {
        Instance {
            id: id.into(),
            db_id: db.into(),
            question: q.into(),
            nlq: tokenize(q),
            label: sql.map_or(Label::None, |s| Label::Gold { sql: s.into() }),
            origin_task: None,
            split,
        }
    }

    fn tiny_task(index: usize, db: &str, table: &str) -> Task {
        let tr = SplitTag::Train;
        Task {
            index,
            dbs: [db.to_string()].into(),
            labeled: vec![
                inst(&format!("{db}-a1"), db, &format!("how many {table}"), Some(&format!("SELECT count(*) FROM {table}")), tr),
                inst(&format!("{db}-a2"), db, &format!("list the age of {table}"), Some(&format!("SELECT age FROM {table}")), tr),
                inst(&format!("{db}-a3"), db, &format!("count {table}"), Some(&format!("SELECT count(*) FROM {table}")), tr),
            ],
            unlabeled: vec![
                inst(&format!("{db}-u1"), db, &format!("how many {table} are there"), None, tr),
                inst(&format!("{db}-u2"), db, &format!("show the age of all {table}"), None, tr),
            ],
            valid: vec![],
            test: vec![
                inst(&format!("{db}-t1"), db, &format!("how many {table} exist"), Some(&format!("SELECT count(*) FROM {table}")), SplitTag::Test),
                inst(&format!("{db}-t2"), db, &format!("age of {table}"), Some(&format!("SELECT age FROM {table}")), SplitTag::Test),
            ],
        }
    }

    fn stream(k: usize) -> TaskStream {
        let names = [("d1", "singer"), ("d2", "pet"), ("d3", "car")];
        let mut schemas = BTreeMap::new();
        let mut tasks = Vec::new();
        for (i, (db, table)) in names.iter().take(k).enumerate() {
            schemas.insert(db.to_string(), schema(db, table, &["age", "name"]));
            tasks.push(tiny_task(i + 1, db, table));
        }
        TaskStream { tasks, schemas }
    }

    fn cfg() -> StrategyConfig {
        StrategyConfig {
            warm_epochs: 3,
            self_epochs: 2,
            pseudo_count: 2,
            feature_dim: 256,
            ..StrategyConfig::default()
        }
    }

    #[test]
    fn names_round_trip() {
        for k in StrategyKind::ALL {
            assert_eq!(k.name().parse::<StrategyKind>().unwrap(), k);
        }
        assert!(matches!("ewc".parse::<StrategyKind>(), Err(StrategyError::UnknownStrategy(_))));
    }

    #[test]
    fn memory_sizes() {
        let c = StrategyConfig::default();
        assert_eq!(c.memory_size(120), 36);
        assert_eq!(c.memory_size(1), 1);
        let capped = StrategyConfig { memory_cap: Some(10), ..c };
        assert_eq!(capped.memory_size(120), 10);
        assert_eq!(capped.sampler_config(120).pool_size, 30);
    }

    #[test]
    fn warm_start_zero_epochs_leaves_parser() {
        let st = stream(1);
        let c = cfg();
        let mut s = Session::new(&st, &c);
        let mut p = ReferenceParser::new(64);
        s.warm_start(&mut p, 1, Role::Learner, 0).unwrap();
        assert!(p.params().iter().all(|w| *w == 0.0));
        assert_eq!(s.visits, 0);
    }

    #[test]
    fn warm_start_reads_labeled_only() {
        let st = stream(1);
        let c = cfg();
        let mut s = Session::new(&st, &c);
        let mut p = ReferenceParser::new(64);
        s.warm_start(&mut p, 1, Role::Learner, 4).unwrap();
        for e in &s.audit.events {
            if let AuditEvent::Access { phase: Phase::Warm, set, .. } = e {
                assert_eq!(*set, DataSet::Labeled);
            }
        }
        assert_eq!(s.visits, 12);
    }

    #[test]
    fn empty_labeled_is_an_error() {
        let mut st = stream(1);
        st.tasks[0].labeled.clear();
        let c = cfg();
        let mut s = Session::new(&st, &c);
        let mut p = ReferenceParser::new(64);
        assert!(matches!(s.warm_start(&mut p, 1, Role::Learner, 1), Err(StrategyError::EmptyLabeled(1))));
    }

    #[test]
    fn self_update_terms() {
        let st = stream(1);
        let c = cfg();
        let mut s = Session::new(&st, &c);
        let mut p = ReferenceParser::new(64);
        s.warm_start(&mut p, 1, Role::Learner, 2).unwrap();
        let (r, pseudo) = s.self_update_epoch(&mut p, 1, Role::Learner, 0, &[]).unwrap();
        assert_eq!(r.count(TermKind::Gold), 3);
        assert_eq!(r.count(TermKind::Pseudo), 2);
        assert_eq!(pseudo.len(), 2);
        for q in &pseudo {
            let mu = q.label.confidence().unwrap();
            assert!(mu > 0.0 && mu <= 1.0);
        }
    }

    #[test]
    fn oversized_pseudo_count_warns() {
        let st = stream(1);
        let c = StrategyConfig { pseudo_count: 9, ..cfg() };
        let mut s = Session::new(&st, &c);
        let mut p = ReferenceParser::new(64);
        s.warm_start(&mut p, 1, Role::Learner, 1).unwrap();
        let (r, _) = s.self_update_epoch(&mut p, 1, Role::Learner, 0, &[]).unwrap();
        assert_eq!(r.count(TermKind::Pseudo), 2);
        assert!(s.audit.events.iter().any(|e| matches!(e, AuditEvent::Warning { .. })));
    }

    #[test]
    fn all_strategies_run() {
        let st = stream(3);
        let c = cfg();
        let reg = Registry::default();
        for name in reg.names().collect::<Vec<_>>() {
            let r = reg.run(name, &st, &c).unwrap();
            assert_eq!(r.matrix.k(), 3);
            assert!(r.report.acc_a >= 0.0 && r.report.acc_a <= 1.0, "{name}");
        }
        assert!(matches!(reg.run("ewc", &st, &c), Err(StrategyError::UnknownStrategy(_))));
    }

    #[test]
    fn vanilla_replays_first_memory() {
        let st = stream(2);
        let c = cfg();
        let r = run_vanilla(&st, &c).unwrap();
        let m1 = r
            .audit
            .events
            .iter()
            .find_map(|e| match e {
                AuditEvent::Memory { task: 1, ids, .. } => Some(ids.len()),
                _ => None,
            })
            .unwrap();
        assert_eq!(m1, c.memory_size(5));
        for (task, _, phase, _, terms) in r.audit.terms() {
            let mem = terms.get(&TermKind::Memory).map_or(0, |t| t.count);
            match (task, phase) {
                (2, Phase::SelfUpdate) => assert_eq!(mem, m1),
                _ => assert_eq!(mem, 0),
            }
        }
    }

    #[test]
    fn oracle_visits() {
        let st = stream(3);
        let c = cfg();
        let r = run_oracle(&st, &c).unwrap();
        let epochs = (c.warm_epochs + c.self_epochs) as u64;
        assert_eq!(r.visits, epochs * (3 + 6 + 9));
    }

    #[test]
    fn memory_store_rejects_overflow_and_rewrite() {
        let mut m = MemoryStore::new();
        let a = inst("a", "d1", "q", Some("SELECT age FROM singer"), SplitTag::Train);
        assert!(m.insert(1, 0, vec![a.clone()]).is_err());
        m.insert(1, 1, vec![a.clone()]).unwrap();
        assert!(m.insert(1, 1, vec![a]).is_err());
        assert_eq!(m.len(), 1);
    }
}
