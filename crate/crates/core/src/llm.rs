//! Chat-completion providers: remote HTTP clients and deterministic mocks.

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::is_http_url;
use crate::provider::{HttpFailure, JsonClient, RetryPolicy, DEFAULT_MAX_IN_FLIGHT};
use crate::rag::Prompt;
use crate::text::first_sentence;

pub const MOCK_ECHO: &str = "mock-echo";
pub const MOCK_EXTRACTIVE: &str = "mock-extractive";
pub const NO_CONTEXT: &str = "NO CONTEXT";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("prompt has an empty query")]
    EmptyPrompt,
    #[error("provider {provider_id} returned an empty completion")]
    EmptyResponse { provider_id: String },
    #[error("provider {provider_id} failed: {message}")]
    Provider {
        provider_id: String,
        status: Option<u16>,
        retryable: bool,
        message: String,
    },
    #[error("invalid llm provider config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmProviderConfig {
    pub provider_id: String,
    /// `"mock-echo"`, `"mock-extractive"` or an HTTP(S) chat-completions URL.
    pub endpoint: String,
    #[serde(default)]
    pub model_name: String,
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_timeout_ms() -> u64 {
    60_000
}

fn default_max_output_tokens() -> u32 {
    1024
}

fn default_max_in_flight() -> usize {
    DEFAULT_MAX_IN_FLIGHT
}

impl LlmProviderConfig {
    pub fn mock(provider_id: impl Into<String>, endpoint: &str) -> Self {
        Self {
            provider_id: provider_id.into(),
            endpoint: endpoint.into(),
            model_name: String::new(),
            auth_env: None,
            timeout_ms: default_timeout_ms(),
            max_output_tokens: default_max_output_tokens(),
            max_in_flight: default_max_in_flight(),
            retry: RetryPolicy::default(),
        }
    }

    pub fn http(provider_id: impl Into<String>, url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            endpoint: url.into(),
            model_name: model_name.into(),
            ..Self::mock(provider_id, MOCK_ECHO)
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        let bad = |m: &str| Err(LlmError::InvalidConfig(format!("{}: {m}", self.provider_id)));
        if self.provider_id.is_empty() {
            return bad("provider_id must not be empty");
        }
        if self.timeout_ms == 0 {
            return bad("timeout_ms must be positive");
        }
        if self.max_output_tokens == 0 {
            return bad("max_output_tokens must be positive");
        }
        let known = matches!(self.endpoint.as_str(), MOCK_ECHO | MOCK_EXTRACTIVE);
        if !known && !is_http_url(&self.endpoint) {
            return bad("endpoint must be mock-echo, mock-extractive or an http(s) URL");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub provider_id: String,
    pub latency_ms: u64,
    pub token_estimate: usize,
}

/// `ceil(chars / 4)`.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

pub trait ChatModel: Send + Sync {
    fn provider_id(&self) -> &str;
    fn complete(&self, prompt: &Prompt) -> Result<Completion, LlmError>;
}

fn timed(
    provider_id: &str,
    prompt: &Prompt,
    call: impl FnOnce() -> Result<String, LlmError>,
) -> Result<Completion, LlmError> {
    if prompt.query.is_empty() {
        return Err(LlmError::EmptyPrompt);
    }
    let started = Instant::now();
    let text = call()?;
    let latency_ms = started.elapsed().as_millis() as u64;
    if text.is_empty() {
        return Err(LlmError::EmptyResponse {
            provider_id: provider_id.to_string(),
        });
    }
    Ok(Completion {
        token_estimate: estimate_tokens(&text),
        text,
        provider_id: provider_id.to_string(),
        latency_ms,
    })
}

/// Replies `"ECHO: <query>"`.
#[derive(Debug, Clone)]
pub struct EchoModel {
    provider_id: String,
}

impl EchoModel {
    pub fn new(provider_id: impl Into<String>) -> Self {
        Self {
            provider_id: provider_id.into(),
        }
    }
}

impl ChatModel for EchoModel {
    fn provider_id(&self) -> &str {
        &self.provider_id
    }

    fn complete(&self, prompt: &Prompt) -> Result<Completion, LlmError> {
        timed(&self.provider_id, prompt, || Ok(format!("ECHO: {}", prompt.query)))
    }
}

/// Replies with the first sentence of the best-scored context block, or
/// [`NO_CONTEXT`] when the prompt has none.
#[derive(Debug, Clone)]
pub struct ExtractiveModel {
    provider_id: String,
}

impl ExtractiveModel {
    pub fn new(provider_id: impl Into<String>) -> Self {
        Self {
            provider_id: provider_id.into(),
        }
    }
}

impl ChatModel for ExtractiveModel {
    fn provider_id(&self) -> &str {
        &self.provider_id
    }

    fn complete(&self, prompt: &Prompt) -> Result<Completion, LlmError> {
        timed(&self.provider_id, prompt, || {
            let best = prompt
                .context_blocks
                .iter()
                .max_by(|a, b| a.score.total_cmp(&b.score).then_with(|| b.chunk_id.cmp(&a.chunk_id)));
            Ok(match best {
                Some(block) => {
                    let sentence = first_sentence(&block.text);
                    if sentence.is_empty() { NO_CONTEXT } else { sentence }.to_string()
                }
                None => NO_CONTEXT.to_string(),
            })
        })
    }
}

/// Client for `{"model","messages"}` → `{"choices":[{"message":{"content"}}]}` APIs.
#[derive(Debug)]
pub struct HttpChatModel {
    config: LlmProviderConfig,
    client: JsonClient,
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

impl HttpChatModel {
    pub fn new(config: LlmProviderConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let client = JsonClient::new(
            &config.endpoint,
            config.auth_env.as_deref(),
            Duration::from_millis(config.timeout_ms),
            config.max_in_flight,
            config.retry,
        )
        .map_err(LlmError::InvalidConfig)?;
        Ok(Self { config, client })
    }

    fn provider_error(&self, failure: HttpFailure) -> LlmError {
        LlmError::Provider {
            provider_id: self.config.provider_id.clone(),
            status: failure.status(),
            retryable: failure.is_retryable(),
            message: failure.to_string(),
        }
    }
}

impl ChatModel for HttpChatModel {
    fn provider_id(&self) -> &str {
        &self.config.provider_id
    }

    fn complete(&self, prompt: &Prompt) -> Result<Completion, LlmError> {
        timed(&self.config.provider_id, prompt, || {
            let body = serde_json::json!({
                "model": self.config.model_name,
                "messages": [
                    {"role": "system", "content": prompt.system_text},
                    {"role": "user", "content": prompt.user_message()},
                ],
                "max_tokens": self.config.max_output_tokens,
            });
            let response: ChatResponse =
                self.client.post(&body).map_err(|f| self.provider_error(f))?;
            Ok(response
                .choices
                .into_iter()
                .next()
                .and_then(|c| c.message.content)
                .unwrap_or_default())
        })
    }
}

pub fn build_chat_model(config: &LlmProviderConfig) -> Result<Arc<dyn ChatModel>, LlmError> {
    config.validate()?;
    Ok(match config.endpoint.as_str() {
        MOCK_ECHO => Arc::new(EchoModel::new(config.provider_id.clone())),
        MOCK_EXTRACTIVE => Arc::new(ExtractiveModel::new(config.provider_id.clone())),
        _ => Arc::new(HttpChatModel::new(config.clone())?),
    })
}
