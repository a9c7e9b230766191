//! Aggregate finished runs into one comparison table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};
use sqlstream::metrics::MetricsReport;
use sqlstream::strategies::StrategyKind;

use crate::config::RunConfig;
use crate::output::{CONFIG_ECHO, METRICS, TIMING};

/// One run directory, read back.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub strategy: String,
    pub seed: u64,
    pub report: MetricsReport,
    pub train_seconds: Vec<f64>,
    pub sampling_seconds: Vec<f64>,
}

struct TimingRow {
    train_seconds: f64,
    sampling_seconds: f64,
}

fn parse_timing(text: &str) -> anyhow::Result<Vec<TimingRow>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().context("empty timing file")?.split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).with_context(|| format!("timing column `{name}` missing"));
    let (train, sampling) = (col("train_seconds")?, col("sampling_seconds")?);
    lines
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(n, l)| {
            let cells: Vec<&str> = l.split(',').collect();
            let get = |i: usize| -> anyhow::Result<f64> {
                cells
                    .get(i)
                    .and_then(|c| c.parse().ok())
                    .with_context(|| format!("timing line {}: bad number", n + 2))
            };
            Ok(TimingRow {
                train_seconds: get(train)?,
                sampling_seconds: get(sampling)?,
            })
        })
        .collect()
}

pub fn load_run(dir: &Path) -> anyhow::Result<RunSummary> {
    let read = |name: &str| {
        std::fs::read_to_string(dir.join(name)).with_context(|| format!("reading {}", dir.join(name).display()))
    };
    let cfg: RunConfig = toml::from_str(&read(CONFIG_ECHO)?).context("parsing config echo")?;
    let report: MetricsReport = serde_json::from_str(&read(METRICS)?).context("parsing metrics")?;
    let timing = parse_timing(&read(TIMING)?)?;
    let Some(strategy) = cfg.strategy else {
        bail!("{} names no strategy", dir.join(CONFIG_ECHO).display());
    };
    Ok(RunSummary {
        strategy,
        seed: cfg.training.seed,
        report,
        train_seconds: timing.iter().map(|t| t.train_seconds).collect(),
        sampling_seconds: timing.iter().map(|t| t.sampling_seconds).collect(),
    })
}

/// Mean training seconds per task and the share of it spent sampling, per strategy.
pub fn timing_summary(runs: &[RunSummary]) -> BTreeMap<String, (f64, f64)> {
    let mut acc: BTreeMap<String, (f64, f64, usize)> = BTreeMap::new();
    for r in runs {
        let e = acc.entry(r.strategy.clone()).or_default();
        e.0 += r.train_seconds.iter().sum::<f64>();
        e.1 += r.sampling_seconds.iter().sum::<f64>();
        e.2 += r.train_seconds.len();
    }
    acc.into_iter()
        .map(|(k, (train, sampling, n))| {
            let mean = if n == 0 { 0.0 } else { train / n as f64 };
            let share = if train > 0.0 { sampling / train } else { 0.0 };
            (k, (mean, share))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub strategy: String,
    pub runs: usize,
    pub acc_a: f64,
    pub acc_w: f64,
    pub bwt: Option<f64>,
    pub fwt: Option<f64>,
    pub seconds_per_task: f64,
    pub sampling_share: f64,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn mean_opt(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = v.collect();
    v.map(|v| mean(v.into_iter()))
}

/// Builtins first in their usual order, then anything else by name.
fn rank(name: &str) -> (usize, String) {
    let pos = StrategyKind::ALL.iter().position(|k| k.name() == name).unwrap_or(usize::MAX);
    (pos, name.to_string())
}

/// One row per strategy; metrics are means over its runs (seeds).
pub fn aggregate(runs: &[RunSummary]) -> Vec<ReportRow> {
    let timing = timing_summary(runs);
    let mut seen = std::collections::BTreeSet::new();
    for r in runs {
        if !seen.insert((r.strategy.as_str(), r.seed)) {
            log::warn!("{} seed {} appears more than once; both runs are averaged", r.strategy, r.seed);
        }
    }
    let mut by: BTreeMap<(usize, String), Vec<&RunSummary>> = BTreeMap::new();
    for r in runs {
        by.entry(rank(&r.strategy)).or_default().push(r);
    }
    by.into_iter()
        .map(|((_, name), rs)| {
            let (secs, share) = timing[&name];
            ReportRow {
                runs: rs.len(),
                acc_a: mean(rs.iter().map(|r| r.report.acc_a)),
                acc_w: mean(rs.iter().map(|r| r.report.acc_w)),
                bwt: mean_opt(rs.iter().map(|r| r.report.bwt)),
                fwt: mean_opt(rs.iter().map(|r| r.report.fwt)),
                seconds_per_task: secs,
                sampling_share: share,
                strategy: name,
            }
        })
        .collect()
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.1}", 100.0 * x))
}

/// Text table with accuracies in percent.
pub fn render(rows: &[ReportRow]) -> String {
    let mut out = format!(
        "{:<14} {:>4} {:>7} {:>7} {:>7} {:>7} {:>10} {:>9}\n",
        "strategy", "runs", "ACC_a", "ACC_w", "BWT", "FWT", "s/task", "sampling"
    );
    for r in rows {
        writeln!(
            out,
            "{:<14} {:>4} {:>7} {:>7} {:>7} {:>7} {:>10.3} {:>8.1}%",
            r.strategy,
            r.runs,
            pct(Some(r.acc_a)),
            pct(Some(r.acc_w)),
            pct(r.bwt),
            pct(r.fwt),
            r.seconds_per_task,
            100.0 * r.sampling_share
        )
        .unwrap();
    }
    out
}

pub fn to_csv(rows: &[ReportRow]) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:?}"));
    let mut out = String::from("strategy,runs,acc_a,acc_w,bwt,fwt,seconds_per_task,sampling_share\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{:?},{:?},{},{},{:?},{:?}",
            r.strategy,
            r.runs,
            r.acc_a,
            r.acc_w,
            opt(r.bwt),
            opt(r.fwt),
            r.seconds_per_task,
            r.sampling_share
        )
        .unwrap();
    }
    out
}
