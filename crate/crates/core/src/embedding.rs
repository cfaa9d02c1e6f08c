//! Text embedding providers and the unit-norm vector type they produce.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::provider::{HttpFailure, JsonClient, RetryPolicy, DEFAULT_MAX_IN_FLIGHT};

/// Allowed deviation of a stored vector's L2 norm from 1.
pub const NORM_TOLERANCE: f64 = 1e-6;

pub const LOCAL_ENDPOINT: &str = "local";
/// Dimension of the local trigram embedder unless configured otherwise.
pub const DEFAULT_DIM: usize = 768;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("cannot normalize zero vector")]
    ZeroVector,
    #[error("vector has a NaN or infinite component")]
    NonFinite,
    #[error("vector norm {0} is not 1")]
    NotUnitNorm(f64),
    #[error("text at index {index} is empty")]
    EmptyText { index: usize },
    #[error("provider {provider_id} returned {actual}-dimensional vectors, configured for {expected}")]
    DimensionMismatch {
        provider_id: String,
        expected: usize,
        actual: usize,
    },
    #[error("provider {provider_id} failed: {message}")]
    Provider {
        provider_id: String,
        status: Option<u16>,
        retryable: bool,
        message: String,
    },
    #[error("invalid embedding provider config: {0}")]
    InvalidConfig(String),
}

impl EmbeddingError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, EmbeddingError::Provider { retryable: true, .. })
    }
}

/// Scales `values` to unit L2 norm. Accumulates in f64.
pub fn normalize(values: &[f32]) -> Result<Vec<f32>, EmbeddingError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EmbeddingError::NonFinite);
    }
    let norm = l2_norm(values);
    if norm == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok(values.iter().map(|&v| (v as f64 / norm) as f32).collect())
}

fn l2_norm(values: &[f32]) -> f64 {
    values
        .iter()
        .map(|&v| (v as f64) * (v as f64))
        .sum::<f64>()
        .sqrt()
}

/// Dense unit-norm vector tagged with the provider that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f32>,
    provider_id: String,
}

impl EmbeddingVector {
    /// Normalizes `values` and wraps them.
    pub fn from_raw(values: &[f32], provider_id: impl Into<String>) -> Result<Self, EmbeddingError> {
        Ok(Self {
            values: normalize(values)?,
            provider_id: provider_id.into(),
        })
    }

    /// Wraps already-normalized values without touching their bits.
    pub fn from_unit(values: Vec<f32>, provider_id: impl Into<String>) -> Result<Self, EmbeddingError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        let norm = l2_norm(&values);
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(EmbeddingError::NotUnitNorm(norm));
        }
        Ok(Self {
            values,
            provider_id: provider_id.into(),
        })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingProviderConfig {
    pub provider_id: String,
    /// `"local"` for the built-in trigram embedder, otherwise an HTTP(S) URL.
    pub endpoint: String,
    #[serde(default)]
    pub model_name: String,
    pub dim: usize,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_batch")]
    pub max_batch: usize,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_max_batch() -> usize {
    64
}

fn default_max_in_flight() -> usize {
    DEFAULT_MAX_IN_FLIGHT
}

impl EmbeddingProviderConfig {
    pub fn local(provider_id: impl Into<String>, dim: usize) -> Self {
        Self {
            provider_id: provider_id.into(),
            endpoint: LOCAL_ENDPOINT.into(),
            model_name: "hashed-trigram".into(),
            dim,
            auth_env: None,
            timeout_ms: default_timeout_ms(),
            max_batch: default_max_batch(),
            max_in_flight: default_max_in_flight(),
            retry: RetryPolicy::default(),
        }
    }

    pub fn http(provider_id: impl Into<String>, url: impl Into<String>, model_name: impl Into<String>, dim: usize) -> Self {
        Self {
            endpoint: url.into(),
            model_name: model_name.into(),
            ..Self::local(provider_id, dim)
        }
    }

    pub fn is_local(&self) -> bool {
        self.endpoint == LOCAL_ENDPOINT
    }

    pub fn validate(&self) -> Result<(), EmbeddingError> {
        let bad = |m: &str| Err(EmbeddingError::InvalidConfig(format!("{}: {m}", self.provider_id)));
        if self.provider_id.is_empty() {
            return bad("provider_id must not be empty");
        }
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if self.timeout_ms == 0 {
            return bad("timeout_ms must be positive");
        }
        if self.max_batch == 0 {
            return bad("max_batch must be at least 1");
        }
        if !self.is_local() && !is_http_url(&self.endpoint) {
            return bad("endpoint must be \"local\" or an http(s) URL");
        }
        Ok(())
    }
}

pub(crate) fn is_http_url(s: &str) -> bool {
    s.starts_with("http://") || s.starts_with("https://")
}

/// Something that turns text into unit vectors of a fixed dimension.
///
/// Implementors supply [`Embedder::embed_raw`] for one provider-sized batch;
/// the provided methods handle validation, batch splitting, normalization
/// and dimension checks.
pub trait Embedder: Send + Sync {
    fn provider_id(&self) -> &str;
    fn dim(&self) -> usize;
    fn max_batch(&self) -> usize;

    fn max_in_flight(&self) -> usize {
        1
    }

    /// Raw vectors for at most `max_batch` non-empty texts, in input order.
    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbeddingError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        if let Some(index) = texts.iter().position(|t| t.is_empty()) {
            return Err(EmbeddingError::EmptyText { index });
        }
        let batches: Vec<&[&str]> = texts.chunks(self.max_batch().max(1)).collect();
        let workers = self.max_in_flight().clamp(1, batches.len().max(1));
        let raw: Vec<Result<Vec<Vec<f32>>, EmbeddingError>> = if workers == 1 {
            batches.iter().map(|b| self.embed_raw(b)).collect()
        } else {
            let mut slots: Vec<Option<Result<Vec<Vec<f32>>, EmbeddingError>>> =
                (0..batches.len()).map(|_| None).collect();
            std::thread::scope(|scope| {
                let handles: Vec<_> = (0..workers)
                    .map(|w| {
                        let batches = &batches;
                        scope.spawn(move || {
                            (w..batches.len())
                                .step_by(workers)
                                .map(|i| (i, self.embed_raw(batches[i])))
                                .collect::<Vec<_>>()
                        })
                    })
                    .collect();
                for handle in handles {
                    for (i, result) in handle.join().expect("embedding worker panicked") {
                        slots[i] = Some(result);
                    }
                }
            });
            slots.into_iter().map(|s| s.expect("every batch embedded")).collect()
        };

        let mut out = Vec::with_capacity(texts.len());
        for (batch, result) in batches.iter().zip(raw) {
            let vectors = result?;
            if vectors.len() != batch.len() {
                return Err(EmbeddingError::Provider {
                    provider_id: self.provider_id().to_string(),
                    status: None,
                    retryable: false,
                    message: format!("expected {} vectors, got {}", batch.len(), vectors.len()),
                });
            }
            for values in vectors {
                if values.len() != self.dim() {
                    return Err(EmbeddingError::DimensionMismatch {
                        provider_id: self.provider_id().to_string(),
                        expected: self.dim(),
                        actual: values.len(),
                    });
                }
                out.push(EmbeddingVector::from_raw(&values, self.provider_id())?);
            }
        }
        Ok(out)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        let mut vectors = self.embed_batch(&[text])?;
        Ok(vectors.remove(0))
    }
}

/// Deterministic offline embedder: hashed character-trigram counts.
///
/// Lowercases the text, hashes every character trigram with 64-bit FNV-1a
/// into `dim` buckets and counts occurrences. Texts shorter than three
/// characters hash as a single gram.
#[derive(Debug, Clone)]
pub struct HashedTrigramEmbedder {
    provider_id: String,
    dim: usize,
    max_batch: usize,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |hash, &b| (hash ^ b as u64).wrapping_mul(FNV_PRIME))
}

impl HashedTrigramEmbedder {
    pub fn new(provider_id: impl Into<String>, dim: usize) -> Self {
        Self {
            provider_id: provider_id.into(),
            dim: dim.max(1),
            max_batch: default_max_batch(),
        }
    }

    pub fn with_max_batch(mut self, max_batch: usize) -> Self {
        self.max_batch = max_batch.max(1);
        self
    }

    fn counts(&self, text: &str) -> Vec<f32> {
        let lowered: Vec<char> = text.to_lowercase().chars().collect();
        let mut counts = vec![0f32; self.dim];
        let mut buf = [0u8; 12];
        let mut add = |gram: &[char]| {
            let mut len = 0;
            for c in gram {
                len += c.encode_utf8(&mut buf[len..]).len();
            }
            counts[(fnv1a(&buf[..len]) % self.dim as u64) as usize] += 1.0;
        };
        if lowered.len() < 3 {
            if !lowered.is_empty() {
                add(&lowered);
            }
        } else {
            lowered.windows(3).for_each(add);
        }
        counts
    }
}

impl Embedder for HashedTrigramEmbedder {
    fn provider_id(&self) -> &str {
        &self.provider_id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn max_batch(&self) -> usize {
        self.max_batch
    }

    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbeddingError> {
        Ok(texts.iter().map(|t| self.counts(t)).collect())
    }
}

/// Client for `{"model","input":[...]}` → `{"data":[{"index","embedding"}]}` APIs.
#[derive(Debug)]
pub struct HttpEmbedder {
    config: EmbeddingProviderConfig,
    client: JsonClient,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f32>,
}

impl HttpEmbedder {
    pub fn new(config: EmbeddingProviderConfig) -> Result<Self, EmbeddingError> {
        config.validate()?;
        let client = JsonClient::new(
            &config.endpoint,
            config.auth_env.as_deref(),
            Duration::from_millis(config.timeout_ms),
            config.max_in_flight,
            config.retry,
        )
        .map_err(EmbeddingError::InvalidConfig)?;
        Ok(Self { config, client })
    }

    fn provider_error(&self, failure: HttpFailure) -> EmbeddingError {
        EmbeddingError::Provider {
            provider_id: self.config.provider_id.clone(),
            status: failure.status(),
            retryable: failure.is_retryable(),
            message: failure.to_string(),
        }
    }
}

impl Embedder for HttpEmbedder {
    fn provider_id(&self) -> &str {
        &self.config.provider_id
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn max_batch(&self) -> usize {
        self.config.max_batch
    }

    fn max_in_flight(&self) -> usize {
        self.client.max_in_flight()
    }

    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbeddingError> {
        let body = serde_json::json!({
            "model": self.config.model_name,
            "input": texts,
        });
        let response: EmbeddingResponse =
            self.client.post(&body).map_err(|f| self.provider_error(f))?;
        let mut slots: Vec<Option<Vec<f32>>> = vec![None; texts.len()];
        for datum in response.data {
            match slots.get_mut(datum.index) {
                Some(slot @ None) => *slot = Some(datum.embedding),
                _ => {
                    return Err(self.provider_error(HttpFailure::Decode(format!(
                        "unexpected or repeated index {}",
                        datum.index
                    ))))
                }
            }
        }
        slots
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                s.ok_or_else(|| self.provider_error(HttpFailure::Decode(format!("missing index {i}"))))
            })
            .collect()
    }
}

/// Instantiates the embedder a config describes.
pub fn build_embedder(config: &EmbeddingProviderConfig) -> Result<Arc<dyn Embedder>, EmbeddingError> {
    config.validate()?;
    if config.is_local() {
        Ok(Arc::new(
            HashedTrigramEmbedder::new(config.provider_id.clone(), config.dim)
                .with_max_batch(config.max_batch),
        ))
    } else {
        Ok(Arc::new(HttpEmbedder::new(config.clone())?))
    }
}
