use std::path::{Path, PathBuf};

use finvision::orchestrator::RunConfig;
use finvision::{Error, Result};
use serde::{Deserialize, Serialize};

/// The JSON config file: a run configuration plus output settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CliConfig {
    #[serde(flatten)]
    pub run: RunConfig,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// `error`, `warn`, `info`, `debug` or `trace`.
    #[serde(default = "default_log_level")]
    pub log_level: String,
}

fn default_output() -> PathBuf {
    PathBuf::from("output")
}

fn default_log_level() -> String {
    "info".into()
}

/// A config as written plus the directory its relative paths refer to.
pub struct LoadedConfig {
    pub written: CliConfig,
    pub base: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let mut written: CliConfig = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        written.run = RunConfig::from_json(&serde_json::to_string(&written.run)?)?;
        written.run.validate()?;
        let base = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."))
            .to_path_buf();
        Ok(Self { written, base })
    }

    /// Run config with paths usable from the working directory.
    pub fn run_resolved(&self) -> RunConfig {
        self.written.run.resolved_against(&self.base)
    }

    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        match flag {
            Some(p) => p.to_path_buf(),
            None => self.base.join(&self.written.output_dir),
        }
    }

    /// Every effective setting, with resolved paths and the final output
    /// directory, for config.resolved.json.
    pub fn resolved_json(&self, output: &Path) -> Result<serde_json::Value> {
        let resolved = CliConfig {
            run: self.run_resolved(),
            output_dir: output.to_path_buf(),
            log_level: self.written.log_level.clone(),
        };
        Ok(serde_json::to_value(resolved)?)
    }
}
