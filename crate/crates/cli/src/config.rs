//! Run configuration: a TOML file with a schema version, a data source and the
//! strategy hyperparameters.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sqlstream::corpus::{build_task_stream, load_corpus, SplitConfig, TaskStream};
use sqlstream::strategies::StrategyConfig;
use sqlstream::synth::{synth_stream, SynthConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// A problem with the user's input rather than with the run itself. Maps to exit 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Synthetic,
    Files,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: Source,
    /// Generator settings when `source = "synthetic"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SynthConfig>,
    /// Schema and example files when `source = "files"`, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schemas: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub examples: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Strategy name; `--strategy` overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
    pub data: DataConfig,
    #[serde(default)]
    pub training: StrategyConfig,
}

impl RunConfig {
    /// Read and validate a config file. Every failure here is a usage error.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(usage(format!(
                "config schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.data.resolve(base);
        cfg.data.check()?;
        cfg.training.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }

    /// The effective configuration as TOML, enough to repeat the run.
    pub fn echo(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }
}

impl DataConfig {
    fn resolve(&mut self, base: &Path) {
        for p in [&mut self.schemas, &mut self.examples].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    fn check(&self) -> anyhow::Result<()> {
        match self.source {
            Source::Synthetic => {
                if self.schemas.is_some() || self.examples.is_some() || self.split.is_some() {
                    return Err(usage("synthetic data takes no schemas, examples or split"));
                }
            }
            Source::Files => {
                if self.synthetic.is_some() {
                    return Err(usage("[data.synthetic] needs source = \"synthetic\""));
                }
                if self.schemas.is_none() || self.examples.is_none() || self.split.is_none() {
                    return Err(usage("file data needs schemas, examples and [data.split]"));
                }
            }
        }
        Ok(())
    }

    /// Build the task stream. Unreadable or inconsistent inputs are usage errors.
    pub fn stream(&self, seed: u64) -> anyhow::Result<TaskStream> {
        let stream = match self.source {
            Source::Synthetic => synth_stream(&self.synthetic.clone().unwrap_or_default()),
            Source::Files => {
                let (Some(s), Some(e), Some(split)) = (&self.schemas, &self.examples, &self.split) else {
                    unreachable!("checked at load");
                };
                let corpus = load_corpus(s, e).map_err(|e| usage(e.to_string()))?;
                build_task_stream(&corpus, split, seed)
            }
        };
        stream.map_err(|e| usage(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, text: &str) -> PathBuf {
        let p = dir.join("c.toml");
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn synthetic_config_roundtrips_through_echo() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "schema_version = 1\nstrategy = \"vanilla\"\n[data]\nsource = \"synthetic\"\n[data.synthetic]\ntasks = 3\n[training]\nwarm_epochs = 2\n",
        );
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(cfg.training.warm_epochs, 2);
        assert_eq!(cfg.data.synthetic.as_ref().unwrap().tasks, 3);
        std::fs::write(&p, cfg.echo().unwrap()).unwrap();
        assert_eq!(RunConfig::load(&p).unwrap(), cfg);
    }

    #[test]
    fn bad_configs_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        for text in [
            "schema_version = 2\n[data]\nsource = \"synthetic\"\n",
            "schema_version = 1\n[data]\nsource = \"files\"\n",
            "schema_version = 1\nbogus = 1\n[data]\nsource = \"synthetic\"\n",
            "schema_version = 1\n[data]\nsource = \"synthetic\"\n[training]\nlr = -1.0\n",
            "not toml at all",
        ] {
            let err = RunConfig::load(&write(dir.path(), text)).unwrap_err();
            assert!(err.downcast_ref::<UsageError>().is_some(), "{text}: {err}");
        }
        let err = RunConfig::load(&dir.path().join("missing.toml")).unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
    }

    #[test]
    fn file_paths_resolve_against_the_config() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "schema_version = 1\n[data]\nsource = \"files\"\nschemas = \"t.json\"\nexamples = \"e.json\"\n[data.split]\nK = 1\ngroups = [[\"a\"]]\nlabeled_cap = 5\n",
        );
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(cfg.data.schemas.unwrap(), dir.path().join("t.json"));
    }
}
