//! Session configuration: a TOML file of thresholds, service endpoints and
//! input paths, overridden by command-line flags.
//!
//! ```toml
//! [data]
//! dataset = "snli.jsonl"
//! embeddings = "cls.jsonl"
//! checkpoints = ["epoch0.jsonl", "epoch1.jsonl"]
//!
//! [region]
//! var_threshold = 0.2
//!
//! [miner]
//! k = 10
//! sim_min = 0.9
//!
//! [suggestion]
//! endpoint = "https://llm.example/v1/complete"
//! api_key_env = "LLM_API_KEY"
//!
//! [scorers]
//! checkpoints = ["http://localhost:9000/score", "http://localhost:9001/score"]
//! evaluation = "mock:7"
//!
//! [server]
//! listen = "127.0.0.1:8080"
//! event_log = "drafts.events.jsonl"
//! ```

use std::path::{Path, PathBuf};

use dcc_core::estimator::ScorerTarget;
use dcc_core::suggestion::SuggestionConfig;
use dcc_core::{MinerConfig, RegionConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub dataset: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub checkpoints: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorersConfig {
    /// One target per saved checkpoint, in checkpoint order.
    pub checkpoints: Vec<String>,
    /// Scorer used by suite evaluation when a request names none.
    pub evaluation: Option<String>,
    pub parallelism: usize,
}

impl Default for ScorersConfig {
    fn default() -> Self {
        Self {
            checkpoints: Vec::new(),
            evaluation: None,
            parallelism: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub listen: String,
    pub event_log: PathBuf,
    /// Built dashboard assets served under `/`.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            event_log: PathBuf::from("drafts.events.jsonl"),
            static_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkbenchConfig {
    pub data: DataConfig,
    pub region: RegionConfig,
    pub miner: MinerConfig,
    pub suggestion: SuggestionConfig,
    pub scorers: ScorersConfig,
    pub server: ServerConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl WorkbenchConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: Self = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.region
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.miner
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let targets = self
            .scorers
            .checkpoints
            .iter()
            .chain(self.scorers.evaluation.iter())
            .chain(std::iter::once(&self.suggestion.endpoint));
        for t in targets {
            t.parse::<ScorerTarget>().map_err(ConfigError::Invalid)?;
        }
        if self.scorers.parallelism == 0 {
            return Err(ConfigError::Invalid(
                "scorers.parallelism must be at least 1".into(),
            ));
        }
        Ok(())
    }
}
