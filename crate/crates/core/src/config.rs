//! Pipeline configuration as loaded from `--config` JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::backend::LLM_URL_ENV;
use crate::agents::{ChatBackend, ChatBackendConfig, HttpChatBackend, RetryPolicy, ScriptedBackend, SessionConfig};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::segmenter::{
    EmbeddingProvider, EmbeddingProviderConfig, HttpEmbedder, OfflineEmbedder, SegmenterConfig, EMBED_URL_ENV,
};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Endpoint value selecting the built-in hashing embedder.
pub const OFFLINE_ENDPOINT: &str = "offline";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSetting {
    Http(ChatBackendConfig),
    Scripted { path: PathBuf },
}

impl Default for BackendSetting {
    fn default() -> Self {
        BackendSetting::Http(ChatBackendConfig::default())
    }
}

impl BackendSetting {
    /// `scripted:<path>` or `http`.
    pub fn parse(spec: &str) -> Result<Self> {
        if let Some(path) = spec.strip_prefix("scripted:") {
            return Ok(BackendSetting::Scripted { path: path.into() });
        }
        match spec {
            "http" => Ok(BackendSetting::Http(ChatBackendConfig::default())),
            _ => Err(Error::Config(format!(
                "unknown backend {spec:?}; expected `http` or `scripted:<path>`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub gkg: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub prompts_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub embed: EmbeddingProviderConfig,
    pub backend: BackendSetting,
    pub segmenter: SegmenterConfig,
    pub session: SessionConfig,
    pub retry: RetryPolicy,
    pub paths: PathsConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            seed: 0,
            embed: EmbeddingProviderConfig::default(),
            backend: BackendSetting::default(),
            segmenter: SegmenterConfig::default(),
            session: SessionConfig::default(),
            retry: RetryPolicy::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = fsutil::read_json(path)?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "config schema version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    /// Range checks plus existence of every input path.
    pub fn validate(&self) -> Result<()> {
        self.embed.validate()?;
        self.segmenter.validate()?;
        self.session.validate()?;
        match &self.backend {
            BackendSetting::Http(c) => c.validate()?,
            BackendSetting::Scripted { path } => require_file(path, "script")?,
        }
        if let Some(p) = &self.paths.gkg {
            require_file(p, "gkg")?;
        }
        if let Some(p) = &self.paths.prompts_dir {
            if !p.is_dir() {
                return Err(Error::Config(format!("prompts dir {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// Fills blank endpoints from the environment.
    pub fn resolve_endpoints(&mut self) {
        if self.embed.endpoint.is_empty() {
            if let Ok(url) = std::env::var(EMBED_URL_ENV) {
                self.embed.endpoint = url;
            }
        }
        if let BackendSetting::Http(c) = &mut self.backend {
            if c.endpoint.is_empty() {
                if let Ok(url) = std::env::var(LLM_URL_ENV) {
                    c.endpoint = url;
                }
            }
        }
    }

    pub fn embedder(&self) -> Result<Box<dyn EmbeddingProvider>> {
        match self.embed.endpoint.as_str() {
            OFFLINE_ENDPOINT => Ok(Box::new(OfflineEmbedder::new(self.embed.dimension, self.seed))),
            "" => Err(Error::Config(format!(
                "no embedding endpoint configured (set --embed-url or {EMBED_URL_ENV})"
            ))),
            _ => Ok(Box::new(HttpEmbedder::new(self.embed.clone())?)),
        }
    }

    pub fn chat_backend(&self) -> Result<Box<dyn ChatBackend>> {
        match &self.backend {
            BackendSetting::Http(c) => Ok(Box::new(HttpChatBackend::new(c)?)),
            BackendSetting::Scripted { path } => Ok(Box::new(ScriptedBackend::from_jsonl(path)?)),
        }
    }

    pub fn chat_config(&self) -> ChatBackendConfig {
        match &self.backend {
            BackendSetting::Http(c) => c.clone(),
            BackendSetting::Scripted { .. } => ChatBackendConfig::default(),
        }
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} file {} does not exist", path.display())))
    }
}
