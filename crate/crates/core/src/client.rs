//! Blocking client for chat-completions style endpoints.
//!
//! Both the rephraser and evaluated models speak the same contract: a
//! message list goes in, `choices[0].message.content` comes out.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Decode(String),
    #[error("credential variable `{0}` is not set")]
    MissingCredential(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: Box<ClientError> },
}

impl ClientError {
    fn is_retryable(&self) -> bool {
        match self {
            ClientError::Transport(_) => true,
            ClientError::Status { status, .. } => *status == 408 || *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// Anything that turns a single user prompt into a reply.
pub trait ChatBackend: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, prompt: &str) -> Result<String, ClientError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    /// Base URL; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token. Unset means no auth header.
    pub api_key_env: Option<String>,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub timeout_secs: u64,
    /// `None` leaves decoding at the provider default.
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://localhost:8000/v1".into(),
            model: String::new(),
            api_key_env: None,
            max_retries: 4,
            initial_backoff_ms: 500,
            max_backoff_ms: 30_000,
            timeout_secs: 120,
            temperature: Some(0.0),
            max_tokens: None,
        }
    }
}

impl EndpointConfig {
    pub fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    /// Delay before retry number `attempt` (0-based): doubles each time, capped.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt).unwrap_or(u64::MAX);
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(factor).min(self.max_backoff_ms))
    }
}

pub struct HttpChatClient {
    config: EndpointConfig,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl HttpChatClient {
    pub fn new(config: EndpointConfig) -> Result<Self, ClientError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| ClientError::MissingCredential(var.clone()))?),
            None => None,
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(HttpChatClient { config, api_key, http })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    pub fn request_body(&self, prompt: &str) -> serde_json::Value {
        let mut body = json!({
            "model": self.config.model,
            "messages": [{ "role": "user", "content": prompt }],
        });
        if let Some(t) = self.config.temperature {
            body["temperature"] = json!(t);
        }
        if let Some(n) = self.config.max_tokens {
            body["max_tokens"] = json!(n);
        }
        body
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<String, ClientError> {
        let mut req = self.http.post(self.config.completions_url()).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| ClientError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ClientError::Status {
                status: status.as_u16(),
                body: text.chars().take(500).collect(),
            });
        }
        parse_completion(&text)
    }

    /// Checks that the endpoint accepts TCP connections.
    pub fn reachable(&self) -> bool {
        self.http.get(&self.config.base_url).send().is_ok()
    }
}

/// Extracts `choices[0].message.content` from a chat-completions response.
pub fn parse_completion(text: &str) -> Result<String, ClientError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ClientError::Decode(e.to_string()))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| ClientError::Decode("missing choices[0].message.content".into()))
}

impl ChatBackend for HttpChatClient {
    fn model_id(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        let body = self.request_body(prompt);
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Ok(reply) => return Ok(reply),
                Err(err) if err.is_retryable() && attempt < self.config.max_retries => {
                    let delay = self.config.backoff(attempt);
                    log::warn!("{} request failed ({err}); retrying in {delay:?}", self.config.model);
                    thread::sleep(delay);
                    attempt += 1;
                }
                Err(err) if err.is_retryable() => {
                    return Err(ClientError::Exhausted {
                        attempts: attempt + 1,
                        last: Box::new(err),
                    })
                }
                Err(err) => return Err(err),
            }
        }
    }
}
