use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"schema_version = 1
strategy = "vanilla"

[data]
source = "synthetic"

[data.synthetic]
tasks = 3
train = 60
labeled = 20
valid = 10
test = 30

[training]
warm_epochs = 2
self_epochs = 2
"#;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqlstream"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("c.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn run(cfg: &Path, strategy: &str, seed: &str, out: &Path) -> Output {
    bin(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--strategy",
        strategy,
        "--seed",
        seed,
        "--out-dir",
        out.to_str().unwrap(),
        "--threads",
        "2",
    ])
}

fn read(p: PathBuf) -> Vec<u8> {
    std::fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn same_seed_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&cfg, "sfnet", "7", out);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["metrics.json", "acc_matrix.csv", "audit.log", "config_echo"] {
        assert_eq!(read(a.join(name)), read(b.join(name)), "{name} differs");
    }
    let timing = String::from_utf8(read(a.join("timing.csv"))).unwrap();
    assert_eq!(timing.lines().count(), 4);
    let echo = String::from_utf8(read(a.join("config_echo"))).unwrap();
    assert!(echo.contains("strategy = \"sfnet\"") && echo.contains("seed = 7"), "{echo}");
}

#[test]
fn missing_config_exits_2_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&dir.path().join("nope.toml"), "vanilla", "1", &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn malformed_config_exits_2_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "schema_version = 1\n[data]\nsource = \"sideways\"\n");
    let out = dir.path().join("out");
    assert_eq!(run(&cfg, "vanilla", "1", &out).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn unknown_strategy_exits_2_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = run(&cfg, "nonesuch", "1", &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown strategy"));
    assert!(!out.exists());
}

#[test]
fn bad_flags_exit_2() {
    assert_eq!(bin(&["run", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(bin(&["report"]).status.code(), Some(2));
}

#[test]
fn unreadable_data_files_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "schema_version = 1\n[data]\nsource = \"files\"\nschemas = \"missing.json\"\nexamples = \"missing.json\"\n[data.split]\nK = 1\ngroups = [[\"a\"]]\nlabeled_cap = 5\n",
    );
    let out = dir.path().join("out");
    assert_eq!(run(&cfg, "vanilla", "1", &out).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn report_has_one_row_per_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let mut runs = Vec::new();
    for s in ["finetune", "vanilla", "sfnet"] {
        for seed in ["1", "2"] {
            let out = dir.path().join(format!("{s}-{seed}"));
            let o = run(&cfg, s, seed, &out);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            runs.push(out.to_str().unwrap().to_string());
        }
    }
    let report_dir = dir.path().join("report");
    let mut args = vec!["report", "--out-dir", report_dir.to_str().unwrap()];
    args.extend(runs.iter().map(String::as_str));
    let o = bin(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8(o.stdout).unwrap();
    assert_eq!(table.lines().count(), 4, "{table}");
    assert!(table.lines().next().unwrap().contains("ACC_a"));

    let csv = String::from_utf8(read(report_dir.join("report.csv"))).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "strategy,runs,acc_a,acc_w,bwt,fwt,seconds_per_task,sampling_share");
    let names: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["finetune", "vanilla", "sfnet"]);
    for l in &lines[1..] {
        let cells: Vec<&str> = l.split(',').collect();
        assert_eq!(cells[1], "2");
        for c in &cells[2..6] {
            let v: f64 = c.parse().unwrap();
            assert!(v.is_finite() && v.abs() <= 1.0, "{l}");
        }
    }
}

#[test]
fn report_on_a_missing_run_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&["report", dir.path().join("nothing").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stats_and_sample_debug_print_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL);
    let c = cfg.to_str().unwrap();
    let o = bin(&["stats", "--config", c]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 4);

    let o = bin(&["sample-debug", "--config", c, "--task", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("omega=") && text.contains("nearest_comb="), "{text}");

    assert_eq!(bin(&["sample-debug", "--config", c, "--task", "9"]).status.code(), Some(2));
}
