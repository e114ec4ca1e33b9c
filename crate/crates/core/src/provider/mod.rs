//! Language-model access behind one completion interface.
//!
//! Two backends implement [`Provider`]: an OpenAI-compatible HTTP
//! client with retries and on-disk response caching, and a
//! deterministic rule-driven mock for tests and offline runs.

mod cache;
mod http;
mod mock;

pub use cache::ResponseCache;
pub use http::HttpProvider;
pub use mock::{weighted_draw_seed, MockProvider};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Decoding parameters for one completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub n_samples: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stop_sequences: Vec<String>,
    /// Deterministic draw seed; honored by the mock backend only and
    /// excluded from the cache key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SamplingParams {
    pub fn new(temperature: f64, top_p: f64, max_tokens: u32, n_samples: u32) -> Self {
        Self {
            temperature,
            top_p,
            max_tokens,
            n_samples,
            stop_sequences: Vec::new(),
            seed: None,
        }
    }

    pub fn with_stop(mut self, stop: &[&str]) -> Self {
        self.stop_sequences = stop.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 1 {
            return Err(Error::Precondition {
                detail: "n_samples must be >= 1".into(),
            });
        }
        if self.temperature < 0.0 {
            return Err(Error::Precondition {
                detail: "temperature must be >= 0".into(),
            });
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Precondition {
                detail: "top_p must lie in (0, 1]".into(),
            });
        }
        Ok(())
    }
}

/// One chat turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

/// Raw-completion prompt or chat messages; exactly one of the two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestInput {
    Prompt(String),
    Messages(Vec<ChatMessage>),
}

impl RequestInput {
    /// Flat text view used for mock rule matching and log previews.
    pub fn as_text(&self) -> String {
        match self {
            RequestInput::Prompt(p) => p.clone(),
            RequestInput::Messages(msgs) => msgs
                .iter()
                .map(|m| format!("{}: {}", m.role, m.content))
                .collect::<Vec<_>>()
                .join("\n"),
        }
    }
}

/// One completion request, in raw or chat mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub input: RequestInput,
    pub params: SamplingParams,
}

impl CompletionRequest {
    pub fn prompt(text: impl Into<String>, params: SamplingParams) -> Self {
        Self {
            input: RequestInput::Prompt(text.into()),
            params,
        }
    }

    pub fn messages(messages: Vec<ChatMessage>, params: SamplingParams) -> Self {
        Self {
            input: RequestInput::Messages(messages),
            params,
        }
    }

    /// Content digest identifying this request for caching and replay.
    ///
    /// Covers the model id, the input, and all sampling parameters
    /// except the seed, so re-rolls replay from cache.
    pub fn cache_key(&self, model_id: &str) -> String {
        #[derive(Serialize)]
        struct KeyView<'a> {
            model_id: &'a str,
            input: &'a RequestInput,
            temperature: f64,
            top_p: f64,
            max_tokens: u32,
            n_samples: u32,
            stop_sequences: &'a [String],
        }
        let view = KeyView {
            model_id,
            input: &self.input,
            temperature: self.params.temperature,
            top_p: self.params.top_p,
            max_tokens: self.params.max_tokens,
            n_samples: self.params.n_samples,
            stop_sequences: &self.params.stop_sequences,
        };
        let bytes = serde_json::to_vec(&view).expect("request is serializable");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        hex::encode(hasher.finalize())
    }
}

/// Whether a backend's model expects raw prompts or chat messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderMode {
    Completion,
    Chat,
}

/// Retry behavior for transient transport failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Number of retries after the first attempt.
    pub max_retries: u32,
    /// Base backoff in milliseconds; doubled per attempt plus jitter.
    pub backoff_base_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 2,
            backoff_base_ms: 250,
        }
    }
}

/// Configuration of the HTTP backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub base_url: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    pub model_id: String,
    pub mode: ProviderMode,
    #[serde(default = "default_max_concurrent")]
    pub max_concurrent_requests: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Response cache directory; `None` disables caching.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<std::path::PathBuf>,
}

fn default_max_concurrent() -> usize {
    4
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_concurrent_requests < 1 {
            return Err(Error::InvalidConfig {
                detail: "max_concurrent_requests must be >= 1".into(),
            });
        }
        if self.base_url.is_empty() {
            return Err(Error::InvalidConfig {
                detail: "base_url must be non-empty".into(),
            });
        }
        Ok(())
    }
}

/// A completion backend. Shareable across threads; `complete` blocks.
pub trait Provider: Send + Sync {
    /// Run one completion request, returning exactly
    /// `params.n_samples` texts, each truncated at the first stop
    /// sequence.
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<String>>;

    /// Model identifier recorded in generation metadata.
    fn model_id(&self) -> &str;

    /// Input kind the underlying model expects.
    fn mode(&self) -> ProviderMode;
}

/// Truncate a completion at the first occurrence of any stop sequence.
pub(crate) fn apply_stop_sequences(text: &str, stops: &[String]) -> String {
    let mut cut = text.len();
    for stop in stops {
        if stop.is_empty() {
            continue;
        }
        if let Some(pos) = text.find(stop.as_str()) {
            cut = cut.min(pos);
        }
    }
    text[..cut].to_string()
}

/// Wrap plain text as the input kind `mode` expects.
///
/// Callers that default to raw completion fall back to a single user
/// message when the backend is chat-only.
pub fn input_for_mode(text: String, mode: ProviderMode) -> RequestInput {
    match mode {
        ProviderMode::Completion => RequestInput::Prompt(text),
        ProviderMode::Chat => RequestInput::Messages(vec![ChatMessage::user(text)]),
    }
}
