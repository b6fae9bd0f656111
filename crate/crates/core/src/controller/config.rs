use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::Serialize;

use crate::config::{ConfigError, KvFile};
use crate::corpus::Granularity;
use crate::index::CaseMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Standalone,
    Cooperation,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Standalone => "standalone",
            Mode::Cooperation => "cooperation",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standalone" => Ok(Mode::Standalone),
            "cooperation" | "co-operation" => Ok(Mode::Cooperation),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

/// Keys accepted in a job configuration file.
pub const JOB_KEYS: &[&str] = &[
    "mode",
    "resource_path",
    "pair_list_path",
    "case_mode",
    "granularity",
    "workers",
    "scheduler_url",
    "data_transfer",
    "shuffle_seed",
    "output_path",
    "pending_poll_interval",
    "heartbeat_interval",
    "store_intermediate",
    "index_dir",
    "client_id",
];

#[derive(Debug, Clone)]
pub struct Config {
    pub mode: Mode,
    pub resource_path: PathBuf,
    pub pair_list_path: PathBuf,
    pub case_mode: CaseMode,
    pub granularity: Granularity,
    pub workers: usize,
    pub scheduler_url: Option<String>,
    pub data_transfer: bool,
    pub shuffle_seed: u64,
    pub output_path: PathBuf,
    pub pending_poll_interval: Duration,
    pub heartbeat_interval: Duration,
    pub store_intermediate: bool,
    /// Where index caches go when `store_intermediate` is set; defaults to
    /// the output file's directory.
    pub index_dir: Option<PathBuf>,
    pub client_id: Option<String>,
}

impl Config {
    pub fn from_kv(kv: &KvFile) -> Result<Self, ConfigError> {
        kv.expect_keys(JOB_KEYS)?;
        let workers: usize = kv.get_or("workers", 1)?;
        if workers == 0 {
            return Err(ConfigError::Invalid {
                key: "workers".into(),
                reason: "must be positive".into(),
            });
        }
        let config = Config {
            mode: kv.get_or("mode", Mode::Standalone)?,
            resource_path: kv.require_path("resource_path")?,
            pair_list_path: kv.require_path("pair_list_path")?,
            case_mode: kv.get_or("case_mode", CaseMode::Insensitive)?,
            granularity: kv.get_or("granularity", Granularity::Abstract)?,
            workers,
            scheduler_url: kv.raw("scheduler_url").filter(|s| !s.is_empty()).map(str::to_string),
            data_transfer: kv.bool_or("data_transfer", true)?,
            shuffle_seed: kv.get_or("shuffle_seed", 0)?,
            output_path: kv.require_path("output_path")?,
            pending_poll_interval: kv.duration_or("pending_poll_interval", Duration::from_secs(1))?,
            heartbeat_interval: kv.duration_or("heartbeat_interval", Duration::from_secs(10))?,
            store_intermediate: kv.bool_or("store_intermediate", false)?,
            index_dir: kv.path("index_dir"),
            client_id: kv.raw("client_id").map(str::to_string),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_kv(&KvFile::load(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.mode == Mode::Cooperation && self.scheduler_url.is_none() {
            return Err(ConfigError::Invalid {
                key: "scheduler_url".into(),
                reason: "required in cooperation mode".into(),
            });
        }
        Ok(())
    }

    pub fn index_dir(&self) -> PathBuf {
        self.index_dir.clone().unwrap_or_else(|| {
            self.output_path
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_default()
        })
    }
}
