//! Single choke point for all external model calls: chat completion
//! for the tagger/synthesizer/judge/oracle/scorer roles plus text
//! embedding, with retries, a bounded in-flight cap, and a
//! deterministic mock backend for offline runs and tests.

mod http;
mod limiter;
pub mod mock;

pub use http::HttpTransport;
pub use mock::{stable_hash, BuiltinResponder, MockBackend, MockMatcher, MockResponse, MockRule};

use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use limiter::InFlightLimiter;

/// Which configured endpoint a request is routed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelRole {
    Tagger,
    Synthesizer,
    Judge,
    Oracle,
    Scorer,
}

impl ModelRole {
    pub const ALL: [ModelRole; 5] = [
        ModelRole::Tagger,
        ModelRole::Synthesizer,
        ModelRole::Judge,
        ModelRole::Oracle,
        ModelRole::Scorer,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelRole::Tagger => "tagger",
            ModelRole::Synthesizer => "synthesizer",
            ModelRole::Judge => "judge",
            ModelRole::Oracle => "oracle",
            ModelRole::Scorer => "scorer",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub role: ModelRole,
}

impl ChatRequest {
    pub fn new(role: ModelRole, system: impl Into<String>, user: impl Into<String>) -> Self {
        ChatRequest {
            system: system.into(),
            user: user.into(),
            temperature: 0.0,
            max_tokens: 1024,
            role,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.user.trim().is_empty() {
            return Err(Error::gateway("chat request user text is empty"));
        }
        if !(self.temperature >= 0.0) {
            return Err(Error::gateway("temperature must be >= 0"));
        }
        Ok(())
    }
}

/// Per-role endpoint settings for the HTTP backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub url: String,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Total attempts, including the first (>= 1).
    pub attempts: u32,
    /// Base delay; attempt `n` waits `base * 2^(n-1)`.
    pub backoff_base_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            backoff_base_ms: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    /// Route everything to the deterministic mock backend.
    pub mock: bool,
    /// Embedding dimensionality of the mock backend.
    pub mock_dim: usize,
    /// Upper bound on concurrently outstanding requests (>= 1).
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
    pub timeout_ms: u64,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    /// Chat endpoint per role (HTTP backend).
    pub roles: BTreeMap<ModelRole, EndpointConfig>,
    /// Embedding endpoint (HTTP backend).
    pub embedding: Option<EndpointConfig>,
    /// Extra mock rules, matched before the built-in role defaults.
    pub mock_rules: Vec<mock::MockRuleConfig>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            mock: true,
            mock_dim: 16,
            max_in_flight: 8,
            retry: RetryPolicy::default(),
            timeout_ms: 30_000,
            api_key_env: "CURATOR_API_KEY".to_string(),
            roles: BTreeMap::new(),
            embedding: None,
            mock_rules: Vec::new(),
        }
    }
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_in_flight < 1 {
            return Err(Error::config("gateway.max_in_flight must be >= 1"));
        }
        if self.retry.attempts < 1 {
            return Err(Error::config("gateway.retry.attempts must be >= 1"));
        }
        if self.mock && self.mock_dim < 2 {
            return Err(Error::config("gateway.mock_dim must be >= 2"));
        }
        Ok(())
    }
}

/// Transport-level failure classification: transient failures are
/// retried, terminal ones are not.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    Transient(String),
    Terminal(String),
}

impl TransportError {
    fn message(&self) -> &str {
        match self {
            TransportError::Transient(m) | TransportError::Terminal(m) => m,
        }
    }
}

/// A backend able to answer chat and embedding requests. The gateway
/// layers retries and the in-flight cap on top.
pub trait Transport: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> std::result::Result<String, TransportError>;
    fn embed(&self, texts: &[String]) -> std::result::Result<Vec<Vec<f64>>, TransportError>;
}

pub struct Gateway {
    transport: Box<dyn Transport>,
    limiter: InFlightLimiter,
    retry: RetryPolicy,
    /// Embedding dimensionality is pinned on first use; a later
    /// mismatch is a provider contract violation.
    session_dim: OnceLock<usize>,
}

impl Gateway {
    /// Build a gateway from config: mock backend when `config.mock`,
    /// otherwise the HTTP backend.
    pub fn from_config(config: &GatewayConfig) -> Result<Gateway> {
        config.validate()?;
        let transport: Box<dyn Transport> = if config.mock {
            Box::new(MockBackend::from_config(config)?)
        } else {
            Box::new(HttpTransport::from_config(config)?)
        };
        Ok(Gateway::with_transport(transport, config))
    }

    pub fn with_transport(transport: Box<dyn Transport>, config: &GatewayConfig) -> Gateway {
        Gateway {
            transport,
            limiter: InFlightLimiter::new(config.max_in_flight),
            retry: config.retry.clone(),
            session_dim: OnceLock::new(),
        }
    }

    /// Send a chat request, retrying transient failures with
    /// exponential backoff up to the configured attempts.
    pub fn chat_complete(&self, request: &ChatRequest) -> Result<String> {
        request.validate()?;
        self.with_retries(|| {
            let _permit = self.limiter.acquire();
            self.transport.chat(request)
        })
    }

    /// Embed a batch of texts; one vector per input, order-aligned.
    pub fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(Error::gateway("embedding input text is empty"));
        }
        let vectors = self.with_retries(|| {
            let _permit = self.limiter.acquire();
            self.transport.embed(texts)
        })?;
        if vectors.len() != texts.len() {
            return Err(Error::gateway(format!(
                "embedding count mismatch: {} inputs, {} vectors",
                texts.len(),
                vectors.len()
            )));
        }
        for v in &vectors {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::gateway("embedding contains non-finite entries"));
            }
            let dim = *self.session_dim.get_or_init(|| v.len());
            if v.len() != dim {
                return Err(Error::gateway(format!(
                    "embedding dimensionality changed mid-session: {} != {dim}",
                    v.len()
                )));
            }
        }
        Ok(vectors)
    }

    /// Embed one text.
    pub fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let mut out = self.embed_batch(&[text.to_string()])?;
        Ok(out.pop().expect("embed_batch returned aligned output"))
    }

    fn with_retries<T>(
        &self,
        mut call: impl FnMut() -> std::result::Result<T, TransportError>,
    ) -> Result<T> {
        let mut last_message = String::new();
        for attempt in 1..=self.retry.attempts {
            match call() {
                Ok(v) => return Ok(v),
                Err(TransportError::Terminal(m)) => {
                    return Err(Error::gateway(format!("terminal response: {m}")));
                }
                Err(e @ TransportError::Transient(_)) => {
                    last_message = e.message().to_string();
                    if attempt < self.retry.attempts {
                        let delay = self.retry.backoff_base_ms.saturating_mul(1 << (attempt - 1));
                        log::debug!(
                            "transient gateway failure (attempt {attempt}/{}): {last_message}; retrying in {delay}ms",
                            self.retry.attempts
                        );
                        std::thread::sleep(Duration::from_millis(delay));
                    }
                }
            }
        }
        Err(Error::gateway(format!(
            "exhausted {} attempts: {last_message}",
            self.retry.attempts
        )))
    }
}
