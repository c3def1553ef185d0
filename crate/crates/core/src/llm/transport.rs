//! Provider-agnostic chat-completion transport.

use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::config::GenerationConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportErrorKind {
    /// Worth trying again: timeouts, rate limits, server errors.
    Retryable,
    Fatal,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{kind:?} transport error: {message}")]
pub struct TransportError {
    pub kind: TransportErrorKind,
    pub message: String,
}

impl TransportError {
    pub fn retryable(message: impl Into<String>) -> Self {
        TransportError { kind: TransportErrorKind::Retryable, message: message.into() }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        TransportError { kind: TransportErrorKind::Fatal, message: message.into() }
    }

    pub fn is_retryable(&self) -> bool {
        self.kind == TransportErrorKind::Retryable
    }
}

/// A single system + user exchange with a chat model.
///
/// Implementations are shared across threads and must bound every call in time.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, config: &GenerationConfig, system: &str, user: &str) -> Result<String, TransportError>;
}

impl<T: ChatTransport + ?Sized> ChatTransport for Arc<T> {
    fn complete(&self, config: &GenerationConfig, system: &str, user: &str) -> Result<String, TransportError> {
        (**self).complete(config, system, user)
    }
}

impl<T: ChatTransport + ?Sized> ChatTransport for Box<T> {
    fn complete(&self, config: &GenerationConfig, system: &str, user: &str) -> Result<String, TransportError> {
        (**self).complete(config, system, user)
    }
}

impl<T: ChatTransport + ?Sized> ChatTransport for &T {
    fn complete(&self, config: &GenerationConfig, system: &str, user: &str) -> Result<String, TransportError> {
        (**self).complete(config, system, user)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 3, base_delay: Duration::from_millis(500), max_delay: Duration::from_secs(8) }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_retries: u32) -> Self {
        RetryPolicy { max_retries, base_delay: Duration::ZERO, max_delay: Duration::ZERO }
    }

    /// Delay before retry number `attempt` (1-based): base * 2^(attempt-1), capped.
    pub fn delay_for(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt.saturating_sub(1)).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

/// Retries retryable failures with exponential backoff.
#[derive(Debug, Clone)]
pub struct RetryingTransport<T> {
    inner: T,
    policy: RetryPolicy,
}

impl<T> RetryingTransport<T> {
    pub fn new(inner: T, policy: RetryPolicy) -> Self {
        RetryingTransport { inner, policy }
    }

    pub fn inner(&self) -> &T {
        &self.inner
    }
}

impl<T: ChatTransport> ChatTransport for RetryingTransport<T> {
    fn complete(&self, config: &GenerationConfig, system: &str, user: &str) -> Result<String, TransportError> {
        let mut attempt = 0;
        loop {
            match self.inner.complete(config, system, user) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retryable() && attempt < self.policy.max_retries => {
                    attempt += 1;
                    let delay = self.policy.delay_for(attempt);
                    if !delay.is_zero() {
                        thread::sleep(delay);
                    }
                }
                Err(e) => return Err(e),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpTransportConfig {
    /// Base URL of an OpenAI-style API; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Forward the preset seed; turn off for providers that reject it.
    #[serde(default = "default_true")]
    pub send_seed: bool,
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_true() -> bool {
    true
}

impl HttpTransportConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        HttpTransportConfig {
            base_url: base_url.into(),
            model: model.into(),
            api_key: None,
            timeout_secs: default_timeout_secs(),
            send_seed: true,
        }
    }
}

pub struct HttpTransport {
    config: HttpTransportConfig,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(config: HttpTransportConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport { config, agent }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    /// JSON request body for one completion.
    pub fn request_body(&self, config: &GenerationConfig, system: &str, user: &str) -> Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": config.temperature,
            "top_p": config.top_p,
            "max_tokens": config.max_tokens,
        });
        if self.config.send_seed {
            body["seed"] = json!(config.seed);
        }
        body
    }
}

/// Pulls `choices[0].message.content` out of a completion response.
pub fn completion_text(response: &Value) -> Result<String, TransportError> {
    response["choices"][0]["message"]["content"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| TransportError::fatal("response has no choices[0].message.content"))
}

impl ChatTransport for HttpTransport {
    fn complete(&self, config: &GenerationConfig, system: &str, user: &str) -> Result<String, TransportError> {
        let mut request = self.agent.post(&self.endpoint());
        if let Some(key) = &self.config.api_key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = request.send_json(self.request_body(config, system, user)).map_err(|e| match e {
            ureq::Error::Timeout(_) | ureq::Error::Io(_) | ureq::Error::ConnectionFailed => {
                TransportError::retryable(e.to_string())
            }
            other => TransportError::fatal(other.to_string()),
        })?;
        let status = response.status().as_u16();
        let body = response.body_mut().read_to_string().map_err(|e| TransportError::retryable(e.to_string()))?;
        match status {
            200..=299 => {
                let value: Value = serde_json::from_str(&body)
                    .map_err(|e| TransportError::fatal(format!("invalid JSON response: {e}")))?;
                completion_text(&value)
            }
            408 | 429 | 500..=599 => Err(TransportError::retryable(format!("HTTP {status}: {body}"))),
            _ => Err(TransportError::fatal(format!("HTTP {status}: {body}"))),
        }
    }
}
