//! Command-line configuration: a JSON file whose every field is optional.
//!
//! Secrets never appear in the file; it names the environment variable the
//! API key is read from.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::gateway::{
    Embedder, Gateway, GatewayError, HashingEmbedder, HttpChat, HttpEmbedder, HttpSettings, API_KEY_ENV,
};
use crate::ingest::IngestOptions;

pub const CONFIG_ENV: &str = "LADRAG_CONFIG";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {reason}")]
    File { path: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    /// Falls back to the LADRAG_BASE_URL variable, then the OpenAI endpoint.
    pub base_url: Option<String>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    /// Vision-capable chat model; without one, only offline work is possible.
    pub chat_model: Option<String>,
    pub retries: u32,
    pub timeout_secs: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self { base_url: None, api_key_env: API_KEY_ENV.into(), chat_model: None, retries: 2, timeout_secs: 300 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    Hashing,
    Http,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexConfig {
    pub embedder: EmbedderKind,
    pub dimension: usize,
    /// Model name for the HTTP embedder.
    pub embedding_model: Option<String>,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self { embedder: EmbedderKind::Hashing, dimension: 256, embedding_model: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub gateway: GatewayConfig,
    pub index: IndexConfig,
    pub agent: AgentConfig,
    pub ingest: IngestOptions,
}

/// Where chat responses come from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SessionMode {
    /// The configured endpoint, or no chat model when none is configured.
    Live,
    Record(PathBuf),
    Replay(PathBuf),
}

impl Config {
    /// Reads `path`, else the file named by LADRAG_CONFIG, else defaults.
    pub fn load(path: Option<&Path>) -> Result<Config, ConfigError> {
        let from_env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        let Some(path) = path.map(Path::to_path_buf).or(from_env) else {
            return Ok(Config::default());
        };
        let file_error = |reason: String| ConfigError::File { path: path.display().to_string(), reason };
        let text = std::fs::read_to_string(&path).map_err(|e| file_error(e.to_string()))?;
        let config: Config = serde_json::from_str(&text).map_err(|e| file_error(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.agent.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.index.dimension == 0 {
            return Err(ConfigError::Invalid("index.dimension must be positive".into()));
        }
        if self.index.embedder == EmbedderKind::Http && self.index.embedding_model.is_none() {
            return Err(ConfigError::Invalid("index.embedding_model is required for the http embedder".into()));
        }
        if !self.ingest.louvain_resolution.is_finite() || self.ingest.louvain_resolution <= 0.0 {
            return Err(ConfigError::Invalid("ingest.louvain_resolution must be positive".into()));
        }
        if self.gateway.api_key_env.trim().is_empty() {
            return Err(ConfigError::Invalid("gateway.api_key_env must name a variable".into()));
        }
        Ok(())
    }

    fn http_settings(&self) -> HttpSettings {
        let mut settings = HttpSettings::from_env(Some(&self.gateway.api_key_env));
        if let Some(url) = &self.gateway.base_url {
            settings.base_url = url.clone();
        }
        settings.retries = self.gateway.retries;
        settings.timeout = std::time::Duration::from_secs(self.gateway.timeout_secs);
        settings
    }

    pub fn embedder(&self) -> Result<Arc<dyn Embedder>, ConfigError> {
        Ok(match self.index.embedder {
            EmbedderKind::Hashing => Arc::new(HashingEmbedder::new(self.index.dimension)),
            EmbedderKind::Http => {
                let model = self.index.embedding_model.clone().expect("checked by validate");
                Arc::new(HttpEmbedder::new(self.http_settings(), model, self.index.dimension)?)
            }
        })
    }

    pub fn gateway(&self, mode: &SessionMode) -> Result<Gateway, ConfigError> {
        let embedder = self.embedder()?;
        match mode {
            SessionMode::Replay(path) => Ok(Gateway::replay_session(path, embedder)?),
            SessionMode::Live | SessionMode::Record(_) => {
                let gateway = match &self.gateway.chat_model {
                    Some(model) => Gateway::new(Arc::new(HttpChat::new(self.http_settings(), model)?), embedder),
                    None => Gateway::offline(embedder),
                };
                match mode {
                    SessionMode::Record(path) => Ok(gateway.record_session(path)?),
                    _ => Ok(gateway),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_fills_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"agent": {"max_rounds": 7}, "index": {"dimension": 64}}"#).unwrap();
        let c = Config::load(Some(&path)).unwrap();
        assert_eq!(c.agent.max_rounds, 7);
        assert_eq!(c.agent.context_fill_ratio, 0.8);
        assert_eq!(c.index.dimension, 64);
        assert_eq!(c.gateway.api_key_env, API_KEY_ENV);
    }

    #[test]
    fn bad_values_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        for body in [
            r#"{"agent": {"max_rounds": 0}}"#,
            r#"{"index": {"embedder": "http"}}"#,
            r#"{"api_key": "sk-123"}"#,
            "not json",
        ] {
            std::fs::write(&path, body).unwrap();
            assert!(Config::load(Some(&path)).is_err(), "{body}");
        }
    }

    #[test]
    fn no_chat_model_means_offline() {
        let g = Config::default().gateway(&SessionMode::Live).unwrap();
        assert!(!g.has_chat());
        assert_eq!(g.embedder().name(), "hashing-256");
    }
}
