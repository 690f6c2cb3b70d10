use crate::{
    ChatBackend, ChatParams, Embedder, HashingEmbedder, HttpBackend, HttpEmbedder, LlmError,
    ScriptedBackend,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatConfig {
    #[serde(default)]
    pub base_url: String,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub temperature: f32,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedConfig {
    #[serde(default)]
    pub base_url: String,
    #[serde(default)]
    pub model: String,
}

/// `{backend, chat: {base_url, model, temperature, seed}, embed: {base_url, model}}`.
/// With `backend = "mock"` the chat side replays `script` (relative paths
/// resolve against the config file) and embeddings use the hashing embedder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    pub backend: BackendKind,
    #[serde(default = "default_chat")]
    pub chat: ChatConfig,
    #[serde(default)]
    pub embed: Option<EmbedConfig>,
    #[serde(default)]
    pub script: Option<PathBuf>,
    #[serde(default)]
    pub max_input_tokens: Option<usize>,
}

fn default_chat() -> ChatConfig {
    ChatConfig {
        base_url: String::new(),
        model: String::new(),
        temperature: 0.0,
        seed: Some(0),
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Backend(#[from] LlmError),
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self::mock(None)
    }
}

impl LlmConfig {
    pub fn mock(script: Option<PathBuf>) -> Self {
        Self {
            backend: BackendKind::Mock,
            chat: default_chat(),
            embed: None,
            script,
            max_input_tokens: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        config.check()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::from_json(&text)?;
        if let (Some(script), Some(dir)) = (&config.script, path.parent()) {
            if script.is_relative() {
                config.script = Some(dir.join(script));
            }
        }
        Ok(config)
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if self.backend == BackendKind::Http
            && (self.chat.base_url.is_empty() || self.chat.model.is_empty())
        {
            return Err(ConfigError::Invalid(
                "http backend needs chat.base_url and chat.model".into(),
            ));
        }
        Ok(())
    }

    pub fn params(&self) -> ChatParams {
        ChatParams {
            temperature: self.chat.temperature,
            max_tokens: None,
            seed: self.chat.seed,
        }
    }

    /// Chat backend for this config. Mock without a script yields a backend
    /// that answers every call with `ScriptMiss`.
    pub fn chat_backend(&self) -> Result<Arc<dyn ChatBackend>, ConfigError> {
        Ok(match self.backend {
            BackendKind::Mock => match &self.script {
                Some(path) => Arc::new(ScriptedBackend::from_file(path)?),
                None => Arc::new(ScriptedBackend::new(Vec::new())),
            },
            BackendKind::Http => Arc::new(HttpBackend::new(&self.chat.base_url, &self.chat.model)?),
        })
    }

    pub fn embedder(&self) -> Result<Arc<dyn Embedder>, ConfigError> {
        Ok(match (&self.backend, &self.embed) {
            (BackendKind::Http, Some(e)) => Arc::new(HttpEmbedder::new(&e.base_url, &e.model)?),
            _ => Arc::new(HashingEmbedder::default()),
        })
    }
}
