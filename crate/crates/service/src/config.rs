//! Study configuration: a TOML file plus environment overrides.

use std::path::{Path, PathBuf};

use alienzoo_core::game::{Timings, TRIALS};
use alienzoo_core::{CfeConfig, Condition, Experiment};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

pub const ENV_BIND: &str = "ALIENZOO_BIND";
pub const ENV_ADMIN_TOKEN: &str = "ALIENZOO_ADMIN_TOKEN";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Assignment {
    BlockRandom,
    Fixed { condition: Condition },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub experiment: Experiment,
    /// Tree document to serve. Without one the default recipe is trained
    /// at startup with `seed`.
    #[serde(default)]
    pub model_path: Option<PathBuf>,
    #[serde(default = "default_trials")]
    pub trials: u8,
    #[serde(default)]
    pub timings: Timings,
    #[serde(default)]
    pub cfe: CfeConfig,
    #[serde(default = "default_assignment")]
    pub assignment: Assignment,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_bind")]
    pub bind: String,
    /// Where the event log and snapshots live.
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    /// Write a snapshot after this many events.
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: u64,
    /// Bearer token for `/admin`. Usually supplied through the environment.
    #[serde(default, skip_serializing)]
    pub admin_token: Option<String>,
}

fn default_trials() -> u8 {
    TRIALS
}
fn default_assignment() -> Assignment {
    Assignment::BlockRandom
}
fn default_bind() -> String {
    "127.0.0.1:8080".into()
}
fn default_data_dir() -> PathBuf {
    PathBuf::from("study-data")
}
fn default_snapshot_every() -> u64 {
    500
}

impl StudyConfig {
    pub fn new(experiment: Experiment) -> Self {
        StudyConfig {
            experiment,
            model_path: None,
            trials: TRIALS,
            timings: Timings::default(),
            cfe: CfeConfig::default(),
            assignment: Assignment::BlockRandom,
            seed: 0,
            bind: default_bind(),
            data_dir: default_data_dir(),
            snapshot_every: default_snapshot_every(),
            admin_token: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        let config: StudyConfig =
            toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Read `path` and apply environment overrides. Relative paths inside
    /// the file are taken relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(p) = &config.model_path {
            config.model_path = Some(base.join(p));
        }
        config.data_dir = base.join(&config.data_dir);
        config.apply_env(|k| std::env::var(k).ok());
        Ok(config)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) {
        if let Some(bind) = var(ENV_BIND) {
            self.bind = bind;
        }
        if let Some(token) = var(ENV_ADMIN_TOKEN).filter(|t| !t.is_empty()) {
            self.admin_token = Some(token);
        }
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.trials != TRIALS {
            return Err(ServiceError::Config(format!(
                "trials must be {TRIALS}, got {}",
                self.trials
            )));
        }
        let t = self.timings;
        if t.start_delay_s == 0 || t.continue_delay_s == 0 || t.progress_s == 0 {
            return Err(ServiceError::Config("timings must be positive".into()));
        }
        self.cfe.validate().map_err(ServiceError::Config)?;
        if self.snapshot_every == 0 {
            return Err(ServiceError::Config(
                "snapshot_every must be positive".into(),
            ));
        }
        Ok(())
    }
}
