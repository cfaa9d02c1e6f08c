//! Plumbing shared by the remote embedding and chat-completion clients.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

/// Exponential backoff for transient provider failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    #[serde(with = "millis")]
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(250),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            base_delay: Duration::ZERO,
        }
    }

    /// Delay before retry number `attempt` (0-based): base, 2·base, 4·base, ...
    pub fn delay(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(1u32 << attempt.min(16))
    }

    pub(crate) fn run<T>(
        &self,
        mut op: impl FnMut() -> Result<T, HttpFailure>,
    ) -> Result<T, HttpFailure> {
        let mut attempt = 0;
        loop {
            match op() {
                Err(e) if e.is_retryable() && attempt < self.max_retries => {
                    tracing::debug!(attempt, error = %e, "retrying provider call");
                    std::thread::sleep(self.delay(attempt));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum HttpFailure {
    Status { status: u16, body: String },
    Timeout(String),
    Transport(String),
    Decode(String),
}

impl HttpFailure {
    pub fn is_retryable(&self) -> bool {
        match self {
            HttpFailure::Status { status, .. } => *status >= 500 || *status == 429,
            HttpFailure::Timeout(_) | HttpFailure::Transport(_) => true,
            HttpFailure::Decode(_) => false,
        }
    }

    pub fn status(&self) -> Option<u16> {
        match self {
            HttpFailure::Status { status, .. } => Some(*status),
            _ => None,
        }
    }
}

impl std::fmt::Display for HttpFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HttpFailure::Status { status, body } => write!(f, "HTTP {status}: {body}"),
            HttpFailure::Timeout(m) => write!(f, "timed out: {m}"),
            HttpFailure::Transport(m) => write!(f, "transport error: {m}"),
            HttpFailure::Decode(m) => write!(f, "invalid response: {m}"),
        }
    }
}

/// Counting semaphore capping concurrent requests to one provider.
#[derive(Debug)]
pub(crate) struct InFlightLimit {
    max: usize,
    active: Mutex<usize>,
    released: Condvar,
}

pub(crate) struct InFlightGuard<'a> {
    limit: &'a InFlightLimit,
}

impl InFlightLimit {
    pub fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            active: Mutex::new(0),
            released: Condvar::new(),
        }
    }

    pub fn max(&self) -> usize {
        self.max
    }

    pub fn acquire(&self) -> InFlightGuard<'_> {
        let mut active = self.active.lock().unwrap_or_else(|e| e.into_inner());
        while *active >= self.max {
            active = self
                .released
                .wait(active)
                .unwrap_or_else(|e| e.into_inner());
        }
        *active += 1;
        InFlightGuard { limit: self }
    }
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut active = self.limit.active.lock().unwrap_or_else(|e| e.into_inner());
        *active -= 1;
        self.limit.released.notify_one();
    }
}

/// JSON-over-HTTP POST client with bearer auth and a global timeout.
#[derive(Debug)]
pub(crate) struct JsonClient {
    agent: ureq::Agent,
    url: String,
    bearer: Option<String>,
    limit: InFlightLimit,
    retry: RetryPolicy,
}

impl JsonClient {
    pub fn new(
        url: &str,
        auth_env: Option<&str>,
        timeout: Duration,
        max_in_flight: usize,
        retry: RetryPolicy,
    ) -> Result<Self, String> {
        let bearer = match auth_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| format!("environment variable {var} is not set"))?,
            ),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            agent,
            url: url.to_string(),
            bearer,
            limit: InFlightLimit::new(max_in_flight),
            retry,
        })
    }

    pub fn max_in_flight(&self) -> usize {
        self.limit.max()
    }

    pub fn post<T: serde::de::DeserializeOwned>(
        &self,
        body: &serde_json::Value,
    ) -> Result<T, HttpFailure> {
        let _slot = self.limit.acquire();
        self.retry.run(|| self.post_once(body))
    }

    fn post_once<T: serde::de::DeserializeOwned>(
        &self,
        body: &serde_json::Value,
    ) -> Result<T, HttpFailure> {
        let mut request = self.agent.post(&self.url);
        if let Some(token) = &self.bearer {
            request = request.header("Authorization", format!("Bearer {token}"));
        }
        let mut response = request.send_json(body).map_err(classify)?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(classify)?;
        if !(200..300).contains(&status) {
            return Err(HttpFailure::Status { status, body: text });
        }
        serde_json::from_str(&text).map_err(|e| HttpFailure::Decode(e.to_string()))
    }
}

fn classify(error: ureq::Error) -> HttpFailure {
    match error {
        ureq::Error::StatusCode(status) => HttpFailure::Status {
            status,
            body: String::new(),
        },
        ureq::Error::Timeout(t) => HttpFailure::Timeout(t.to_string()),
        ureq::Error::Json(e) => HttpFailure::Decode(e.to_string()),
        ureq::Error::Io(e) if e.kind() == std::io::ErrorKind::TimedOut => {
            HttpFailure::Timeout(e.to_string())
        }
        other => HttpFailure::Transport(other.to_string()),
    }
}
