//! Service configuration, read from a TOML file.
//!
//! ```toml
//! bind = "127.0.0.1:8080"
//! corpus_path = "data/mini-corpus"
//! index_path = "target/harvest.agrx"
//! embedding_provider = "local"
//! llm_provider = "mock-extractive"
//! cors_origins = ["http://localhost:5173"]
//!
//! [rag]
//! top_k = 5
//! relevance_threshold = 0.25
//!
//! [[embedding_providers]]
//! provider_id = "local"
//! endpoint = "local"
//! dim = 768
//!
//! [[llm_providers]]
//! provider_id = "mock-extractive"
//! endpoint = "mock-extractive"
//! ```
//!
//! Every key is optional. Relative paths resolve against the working
//! directory. API keys never appear here: providers name an environment
//! variable in `auth_env` instead.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use harvest_core::embedding::DEFAULT_DIM;
use harvest_core::knowledge::IndexSpec;
use harvest_core::llm::MOCK_EXTRACTIVE;
use harvest_core::{ChunkParams, EmbeddingProviderConfig, LlmProviderConfig, RagParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_BODY_LIMIT: usize = 64 * 1024;
pub const DEFAULT_REQUEST_TIMEOUT_MS: u64 = 60_000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid service config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    /// Corpus used by `/v1/ingest` requests that name no source, and for
    /// statistics when an index is loaded at startup.
    pub corpus_path: Option<PathBuf>,
    /// Loaded at startup when it exists; rewritten after every ingest.
    pub index_path: Option<PathBuf>,
    /// Default question bank for `/v1/eval/run`.
    pub questions_path: Option<PathBuf>,
    pub embedding_provider: String,
    pub llm_provider: String,
    pub rag: RagParams,
    pub chunking: ChunkParams,
    pub index: IndexSpec,
    pub key_terms: Vec<String>,
    /// `["*"]` allows any origin.
    pub cors_origins: Vec<String>,
    pub body_limit_bytes: usize,
    pub request_timeout_ms: u64,
    pub embedding_providers: Vec<EmbeddingProviderConfig>,
    pub llm_providers: Vec<LlmProviderConfig>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            corpus_path: None,
            index_path: None,
            questions_path: None,
            embedding_provider: "local".into(),
            llm_provider: MOCK_EXTRACTIVE.into(),
            rag: RagParams::default(),
            chunking: ChunkParams::default(),
            index: IndexSpec::default(),
            key_terms: Vec::new(),
            cors_origins: vec!["http://localhost:5173".into(), "http://127.0.0.1:5173".into()],
            body_limit_bytes: DEFAULT_BODY_LIMIT,
            request_timeout_ms: DEFAULT_REQUEST_TIMEOUT_MS,
            embedding_providers: vec![EmbeddingProviderConfig::local("local", DEFAULT_DIM)],
            llm_providers: vec![
                LlmProviderConfig::mock(MOCK_EXTRACTIVE, MOCK_EXTRACTIVE),
                LlmProviderConfig::mock("mock-echo", "mock-echo"),
            ],
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Self::parse(text, Path::new("<inline>"))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.embedding_provider_config().is_none() {
            return invalid(format!(
                "embedding_provider {:?} is not among embedding_providers",
                self.embedding_provider
            ));
        }
        if self.llm_provider_config().is_none() {
            return invalid(format!("llm_provider {:?} is not among llm_providers", self.llm_provider));
        }
        for p in &self.embedding_providers {
            p.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        for p in &self.llm_providers {
            p.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        self.rag.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.body_limit_bytes == 0 {
            return invalid("body_limit_bytes must be positive".into());
        }
        if self.request_timeout_ms == 0 {
            return invalid("request_timeout_ms must be positive".into());
        }
        Ok(())
    }

    pub fn embedding_provider_config(&self) -> Option<&EmbeddingProviderConfig> {
        self.embedding_providers
            .iter()
            .find(|p| p.provider_id == self.embedding_provider)
    }

    pub fn llm_provider_config(&self) -> Option<&LlmProviderConfig> {
        self.llm_providers.iter().find(|p| p.provider_id == self.llm_provider)
    }
}
