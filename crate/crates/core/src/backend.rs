//! Chat-completion backends.
//!
//! [`HttpBackend`] talks to any OpenAI-compatible endpoint; [`ScriptedBackend`]
//! replays canned replies so whole pipeline runs are reproducible offline.

use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};
use thiserror::Error;
use tracing::{debug, warn};

pub const DEFAULT_MODEL: &str = "gpt-4o-mini";
pub const API_KEY_ENV: &str = "LLM_API_KEY";
pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend gave up after {attempts} attempts: {last_error}")]
    BackendExhausted { attempts: u32, last_error: String },
    #[error("script has no entry left for this request")]
    ScriptExhausted,
    #[error("environment variable {0} is not set")]
    CredentialMissing(String),
    #[error("script parse error at line {line}, column {column}: {message}")]
    ScriptParseError {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("http {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    MalformedResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_output_tokens: Option<u32>,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), BackendError> {
        let first = self
            .messages
            .first()
            .ok_or_else(|| BackendError::InvalidRequest("no messages".into()))?;
        if first.role != Role::System {
            return Err(BackendError::InvalidRequest(
                "first message must be the system prompt".into(),
            ));
        }
        if let Some(m) = self
            .messages
            .iter()
            .find(|m| m.role != Role::Assistant && m.content.trim().is_empty())
        {
            return Err(BackendError::InvalidRequest(format!(
                "empty {:?} message",
                m.role
            )));
        }
        if self.max_output_tokens == Some(0) {
            return Err(BackendError::InvalidRequest(
                "max_output_tokens must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn last_user_message(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub latency_seconds: f64,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

/// Anything that can answer a chat request. Implementations must tolerate
/// concurrent calls.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (**self).complete(request)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for std::sync::Arc<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (**self).complete(request)
    }
}

// ---------------------------------------------------------------------------
// Scripted backend
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "match", rename_all = "lowercase", deny_unknown_fields)]
pub enum ScriptEntry {
    Sequence { response: String },
    Substring { pattern: String, response: String },
}

impl ScriptEntry {
    pub fn sequence(response: impl Into<String>) -> Self {
        Self::Sequence {
            response: response.into(),
        }
    }

    pub fn substring(pattern: impl Into<String>, response: impl Into<String>) -> Self {
        Self::Substring {
            pattern: pattern.into(),
            response: response.into(),
        }
    }

    pub fn response(&self) -> &str {
        match self {
            Self::Sequence { response } | Self::Substring { response, .. } => response,
        }
    }
}

/// Replays a fixed list of replies, each at most once.
///
/// Substring entries are checked first against the last user message; the
/// earliest unconsumed match wins. Otherwise the earliest unconsumed sequence
/// entry is returned.
#[derive(Debug)]
pub struct ScriptedBackend {
    entries: Mutex<Vec<(ScriptEntry, bool)>>,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Result<Self, BackendError> {
        if let Some(pos) = entries.iter().position(|e| e.response().is_empty()) {
            return Err(BackendError::ScriptParseError {
                line: 0,
                column: 0,
                message: format!("entry {pos} has an empty response"),
            });
        }
        Ok(Self {
            entries: Mutex::new(entries.into_iter().map(|e| (e, false)).collect()),
        })
    }

    pub fn from_json(raw: &str) -> Result<Self, BackendError> {
        let entries: Vec<ScriptEntry> =
            serde_json::from_str(raw).map_err(|e| BackendError::ScriptParseError {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
        Self::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn remaining(&self) -> usize {
        self.entries
            .lock()
            .expect("script lock poisoned")
            .iter()
            .filter(|(_, used)| !used)
            .count()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let started = Instant::now();
        let prompt = request.last_user_message().unwrap_or_default();
        let mut entries = self.entries.lock().expect("script lock poisoned");

        let by_pattern = entries.iter().position(|(e, used)| {
            !used && matches!(e, ScriptEntry::Substring { pattern, .. } if prompt.contains(pattern.as_str()))
        });
        let slot = by_pattern
            .or_else(|| {
                entries
                    .iter()
                    .position(|(e, used)| !used && matches!(e, ScriptEntry::Sequence { .. }))
            })
            .ok_or(BackendError::ScriptExhausted)?;

        entries[slot].1 = true;
        Ok(ChatResponse {
            content: entries[slot].0.response().to_string(),
            latency_seconds: started.elapsed().as_secs_f64(),
            prompt_tokens: None,
            completion_tokens: None,
        })
    }
}

// ---------------------------------------------------------------------------
// HTTP backend
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Base URL (`https://api.openai.com`) or a full `.../chat/completions` URL.
    pub endpoint: String,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com".into(),
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            initial_backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(300),
        }
    }
}

impl HttpConfig {
    pub fn completions_url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/v1/chat/completions")
        }
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    #[serde(skip_serializing_if = "Option::is_none")]
    temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

enum Attempt {
    Retry(String),
    Fatal(BackendError),
}

pub struct HttpBackend {
    config: HttpConfig,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    /// Reads the credential from [`API_KEY_ENV`].
    pub fn from_env(config: HttpConfig) -> Result<Self, BackendError> {
        Self::from_env_var(config, API_KEY_ENV)
    }

    pub fn from_env_var(config: HttpConfig, var: &str) -> Result<Self, BackendError> {
        match std::env::var(var) {
            Ok(key) if !key.is_empty() => Self::new(config, key),
            _ => Err(BackendError::CredentialMissing(var.to_string())),
        }
    }

    pub fn new(config: HttpConfig, api_key: impl Into<String>) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        Ok(Self {
            config,
            api_key: api_key.into(),
            client,
        })
    }

    fn attempt(&self, url: &str, body: &WireRequest<'_>) -> Result<ChatResponse, Attempt> {
        let started = Instant::now();
        let resp = self
            .client
            .post(url)
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Attempt::Retry(e.to_string()))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Attempt::Retry(format!(
                "http {}: {}",
                status.as_u16(),
                text
            )));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(BackendError::Http {
                status: status.as_u16(),
                body: text,
            }));
        }
        let wire: WireResponse = serde_json::from_str(&text)
            .map_err(|e| Attempt::Fatal(BackendError::MalformedResponse(e.to_string())))?;
        let content = wire
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| {
                Attempt::Fatal(BackendError::MalformedResponse("no message content".into()))
            })?;
        let usage = wire.usage;
        Ok(ChatResponse {
            content,
            latency_seconds: started.elapsed().as_secs_f64(),
            prompt_tokens: usage.as_ref().and_then(|u| u.prompt_tokens),
            completion_tokens: usage.as_ref().and_then(|u| u.completion_tokens),
        })
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        request.validate()?;
        let url = self.config.completions_url();
        let body = WireRequest {
            model: &request.model,
            messages: &request.messages,
            temperature: request.temperature,
            max_tokens: request.max_output_tokens,
        };
        let attempts = self.config.max_attempts.max(1);
        let mut backoff = self.config.initial_backoff;
        let mut last_error = String::new();
        for attempt in 1..=attempts {
            match self.attempt(&url, &body) {
                Ok(resp) => {
                    debug!(attempt, latency = resp.latency_seconds, "completion ok");
                    return Ok(resp);
                }
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    warn!(attempt, error = %msg, "completion attempt failed");
                    last_error = msg;
                    if attempt < attempts {
                        std::thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        Err(BackendError::BackendExhausted {
            attempts,
            last_error,
        })
    }
}
