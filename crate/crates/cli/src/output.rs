//! Run artifacts. Every file is written to a temporary sibling and renamed into
//! place, so a reader sees either the complete file or none.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use anyhow::Context;
use sqlstream::strategies::RunResult;

pub const ACC_MATRIX: &str = "acc_matrix.csv";
pub const METRICS: &str = "metrics.json";
pub const TIMING: &str = "timing.csv";
pub const AUDIT: &str = "audit.log";
pub const CONFIG_ECHO: &str = "config_echo";

pub fn write_atomic(path: &Path, contents: &str) -> anyhow::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("moving artifact into {}", path.display()))?;
    Ok(())
}

pub fn timing_csv(r: &RunResult) -> String {
    let mut out = String::from("task,train_seconds,sampling_seconds,eval_seconds,trained_instances,catalog_len,unseen_test_skeletons\n");
    for (t, d) in r.timing.iter().zip(&r.diagnostics) {
        writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{},{},{}",
            t.task, t.train_seconds, t.sampling_seconds, t.eval_seconds, d.trained_instances, d.catalog_len, d.unseen_test_skeletons
        )
        .unwrap();
    }
    out
}

/// Render every artifact first, then write them; nothing touches the disk if
/// rendering fails.
pub fn write_run(dir: &Path, r: &RunResult, config_echo: &str) -> anyhow::Result<()> {
    let files = [
        (ACC_MATRIX, r.matrix.to_csv()),
        (METRICS, r.report.to_json()),
        (TIMING, timing_csv(r)),
        (AUDIT, r.audit.to_jsonl()),
        (CONFIG_ECHO, config_echo.to_string()),
    ];
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, body) in &files {
        write_atomic(&dir.join(name), body)?;
    }
    Ok(())
}
