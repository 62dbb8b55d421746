//! Run-directory layout and manifests.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Scale};
use crate::error::CliError;

/// Everything a subcommand needs: the effective config and where its run lives.
pub struct Run {
    pub config: ExperimentConfig,
    pub root: PathBuf,
    pub scale: Option<Scale>,
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub command: String,
    pub run_id: String,
    pub config_hash: String,
    pub seed: u64,
    pub scale: Option<String>,
    /// Paths relative to the run directory, sorted.
    pub artifacts: Vec<String>,
    /// The only nondeterministic part of a run's outputs.
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Timing {
    pub started_at_unix: f64,
    pub wall_time_seconds: f64,
}

impl Run {
    pub fn new(config: ExperimentConfig, out: &Path, scale: Option<Scale>, jobs: usize) -> Self {
        let root = out.join(config.run_id());
        Self { config, root, scale, jobs: jobs.max(1) }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn observations(&self) -> PathBuf {
        self.data_dir().join("observations.csv")
    }

    pub fn metadata(&self) -> PathBuf {
        self.data_dir().join("metadata.json")
    }

    pub fn pi1_cell(&self, n: usize, m: u32) -> PathBuf {
        self.root.join("pi1").join(format!("n{n}_M{m}"))
    }

    pub fn pi2_cell(&self, n: usize, m: u32) -> PathBuf {
        self.root.join("pi2").join(format!("n{n}_M{m}"))
    }

    pub fn full_cell(&self, n: usize) -> PathBuf {
        self.root.join("pi2").join(format!("full_n{n}"))
    }

    pub fn spectral_dir(&self) -> PathBuf {
        self.root.join("spectral")
    }

    pub fn diagnostics_dir(&self) -> PathBuf {
        self.root.join("diagnostics")
    }

    pub fn manifest_path(&self, command: &str) -> PathBuf {
        self.root.join("manifests").join(format!("{command}.json"))
    }

    /// Create the run directory and record the effective config in it.
    pub fn prepare(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.root)?;
        cuthmm::io::write_json(&self.root.join("config.json"), &self.config)?;
        Ok(())
    }

    pub fn relative(&self, path: &Path) -> String {
        path.strip_prefix(&self.root).unwrap_or(path).to_string_lossy().replace('\\', "/")
    }

    pub fn write_manifest(&self, command: &str, clock: &Clock, artifacts: &[PathBuf]) -> Result<PathBuf, CliError> {
        let mut rel: Vec<String> = artifacts.iter().map(|p| self.relative(p)).collect();
        rel.sort();
        rel.dedup();
        let manifest = Manifest {
            command: command.to_string(),
            run_id: self.config.run_id(),
            config_hash: self.config.hash(),
            seed: self.config.data.seed,
            scale: self.scale.map(|s| format!("{s:?}").to_lowercase()),
            artifacts: rel,
            timing: clock.timing(),
        };
        let path = self.manifest_path(command);
        std::fs::create_dir_all(path.parent().expect("manifest directory"))?;
        cuthmm::io::write_json(&path, &manifest)?;
        Ok(path)
    }
}

pub struct Clock {
    started: Instant,
    started_at_unix: f64,
}

impl Clock {
    pub fn start() -> Self {
        let started_at_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
        Self { started: Instant::now(), started_at_unix }
    }

    pub fn timing(&self) -> Timing {
        Timing { started_at_unix: self.started_at_unix, wall_time_seconds: self.started.elapsed().as_secs_f64() }
    }
}
