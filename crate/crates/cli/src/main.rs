mod config;
mod inspect;
mod output;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use sqlstream::strategies::Registry;

use config::{RunConfig, UsageError};

#[derive(Parser)]
#[command(name = "sqlstream", version, about = "Continual semi-supervised text-to-SQL experiments")]
struct Cli {
    /// Worker threads for data-parallel stages (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one strategy over one stream with one seed and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `strategy` in the config.
        #[arg(long)]
        strategy: Option<String>,
        /// Overrides `training.seed` in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Print per-task sizes of the configured stream.
    Stats {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Show what prompt and review sampling choose for one task.
    SampleDebug {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 2)]
        task: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare finished runs: one row per strategy, averaged over seeds.
    Report {
        /// Run directories written by `run`.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Also write report.csv here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn load(path: &Path, seed: Option<u64>) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.training.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    sqlstream::par::init_threads(cli.threads);
    match cli.command {
        Command::Run { config, strategy, seed, out_dir } => {
            let mut cfg = load(&config, seed)?;
            let registry = Registry::default();
            let name = strategy
                .or_else(|| cfg.strategy.clone())
                .ok_or_else(|| UsageError("no strategy: pass --strategy or set `strategy` in the config".into()))?;
            if !registry.contains(&name) {
                let known: Vec<&str> = registry.names().collect();
                return Err(UsageError(format!("unknown strategy `{name}` (known: {})", known.join(", "))).into());
            }
            cfg.strategy = Some(name.clone());
            let stream = cfg.data.stream(cfg.training.seed)?;
            let echo = cfg.echo()?;
            log::info!("running {name} on {} tasks, seed {}", stream.len(), cfg.training.seed);
            let result = registry
                .run(&name, &stream, &cfg.training)
                .with_context(|| format!("strategy {name} failed"))?;
            output::write_run(&out_dir, &result, &echo)?;
            println!(
                "{name} seed {}: ACC_a {:.4} ACC_w {:.4} BWT {} FWT {} -> {}",
                result.seed,
                result.report.acc_a,
                result.report.acc_w,
                result.report.bwt.map_or("-".into(), |v| format!("{v:+.4}")),
                result.report.fwt.map_or("-".into(), |v| format!("{v:+.4}")),
                out_dir.display()
            );
        }
        Command::Stats { config, seed } => {
            let cfg = load(&config, seed)?;
            print!("{}", inspect::stats(&cfg.data.stream(cfg.training.seed)?));
        }
        Command::SampleDebug { config, task, seed } => {
            let cfg = load(&config, seed)?;
            let stream = cfg.data.stream(cfg.training.seed)?;
            print!("{}", inspect::sample_debug(&stream, &cfg.training, task)?);
        }
        Command::Report { runs, out_dir } => {
            let summaries = runs
                .iter()
                .map(|d| report::load_run(d).map_err(|e| UsageError(format!("{}: {e:#}", d.display())).into()))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let rows = report::aggregate(&summaries);
            print!("{}", report::render(&rows));
            if let Some(dir) = out_dir {
                std::fs::create_dir_all(&dir)?;
                output::write_atomic(&dir.join("report.csv"), &report::to_csv(&rows))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
