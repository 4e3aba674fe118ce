//! Minimal chat-completions client.
//!
//! Speaks `POST {base_url}/chat/completions` with `model`, `messages`, and
//! `temperature`; the reply text is the first choice's message content. Any
//! endpoint exposing this wire protocol works, including the bundled
//! [`crate::mock::MockLlm`]. The bearer token, when needed, comes from the
//! `BACALARM_LLM_KEY` environment variable.

use crate::SimError;
use serde::{Deserialize, Serialize};
use std::time::Duration;

/// Environment variable holding the bearer token for the LLM endpoint.
pub const LLM_KEY_ENV: &str = "BACALARM_LLM_KEY";

/// Connection and sampling settings for [`LlmClient`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmConfig {
    /// Endpoint root; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    /// Transport retries after the first attempt.
    pub max_retries: usize,
    /// First retry delay; doubles per retry.
    pub backoff_base_ms: u64,
    /// Per-request timeout.
    pub timeout_ms: u64,
}

impl LlmConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: "deepseek-r1".to_string(),
            temperature: 0.7,
            max_retries: 2,
            backoff_base_ms: 500,
            timeout_ms: 30_000,
        }
    }
}

/// One chat message in the wire format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: "user".to_string(), content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: "assistant".to_string(), content: content.into() }
    }
}

/// Extracted completion: text plus the token count the endpoint reported
/// (0 when the reply carried no usage block).
#[derive(Debug, Clone)]
pub struct LlmReply {
    pub content: String,
    pub total_tokens: u64,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: String,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    total_tokens: u64,
}

/// Blocking chat-completions client with exponential-backoff transport
/// retries.
pub struct LlmClient {
    config: LlmConfig,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl LlmClient {
    /// Builds a client, reading the bearer token from [`LLM_KEY_ENV`].
    pub fn new(config: LlmConfig) -> Self {
        let api_key = std::env::var(LLM_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_key(config, api_key)
    }

    /// Builds a client with an explicit (or absent) bearer token.
    pub fn with_key(config: LlmConfig, api_key: Option<String>) -> Self {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .expect("reqwest client construction cannot fail with these options");
        Self { config, api_key, http }
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    /// Sends one completion request, retrying transport failures (connect
    /// errors, timeouts, 5xx) up to `max_retries` times with exponential
    /// backoff. Non-5xx HTTP errors and malformed reply envelopes are
    /// terminal: retrying a bad key or a broken endpoint wastes budget.
    pub fn complete(&self, messages: &[ChatMessage]) -> Result<LlmReply, SimError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let body = ChatRequest {
            model: &self.config.model,
            messages,
            temperature: self.config.temperature,
        };
        let attempts = self.config.max_retries + 1;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.config.backoff_base_ms.saturating_mul(1 << (attempt - 1));
                std::thread::sleep(Duration::from_millis(delay));
            }
            let mut request = self.http.post(&url).json(&body);
            if let Some(key) = &self.api_key {
                request = request.bearer_auth(key);
            }
            match request.send() {
                Ok(response) => {
                    let status = response.status();
                    if status.is_server_error() {
                        last_error = format!("endpoint returned {status}");
                        continue;
                    }
                    if !status.is_success() {
                        return Err(SimError::Transport {
                            attempts: attempt + 1,
                            detail: format!("endpoint returned {status}"),
                        });
                    }
                    let parsed: ChatResponse = response
                        .json()
                        .map_err(|_| SimError::MalformedReply)?;
                    let first = parsed.choices.into_iter().next().ok_or(SimError::MalformedReply)?;
                    let total_tokens = parsed.usage.map(|u| u.total_tokens).unwrap_or(0);
                    return Ok(LlmReply { content: first.message.content, total_tokens });
                }
                Err(e) => {
                    last_error = e.to_string();
                }
            }
        }
        Err(SimError::Transport { attempts, detail: last_error })
    }
}
