//! OpenAI-compatible HTTP backend with retries, a concurrency bound,
//! and on-disk response caching.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::{
    apply_stop_sequences, CompletionRequest, Provider, ProviderConfig, ProviderMode,
    RequestInput, ResponseCache,
};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

/// Counting semaphore bounding in-flight HTTP calls.
struct ConcurrencyGate {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl ConcurrencyGate {
    fn new(limit: usize) -> Self {
        Self {
            permits: Mutex::new(limit),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> GatePermit<'_> {
        let mut permits = self.permits.lock().expect("gate poisoned");
        while *permits == 0 {
            permits = self.freed.wait(permits).expect("gate poisoned");
        }
        *permits -= 1;
        GatePermit { gate: self }
    }
}

struct GatePermit<'a> {
    gate: &'a ConcurrencyGate,
}

impl Drop for GatePermit<'_> {
    fn drop(&mut self) {
        let mut permits = self.gate.permits.lock().expect("gate poisoned");
        *permits += 1;
        self.gate.freed.notify_one();
    }
}

pub struct HttpProvider {
    config: ProviderConfig,
    client: reqwest::blocking::Client,
    cache: Option<ResponseCache>,
    gate: ConcurrencyGate,
}

impl HttpProvider {
    pub fn new(config: ProviderConfig) -> Result<Self> {
        config.validate()?;
        let cache = match &config.cache_dir {
            Some(dir) => Some(ResponseCache::open(dir)?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| Error::InvalidConfig {
                detail: format!("http client: {e}"),
            })?;
        Ok(Self {
            gate: ConcurrencyGate::new(config.max_concurrent_requests),
            config,
            client,
            cache,
        })
    }

    fn endpoint(&self, input: &RequestInput) -> String {
        let base = self.config.base_url.trim_end_matches('/');
        match input {
            RequestInput::Prompt(_) => format!("{base}/v1/completions"),
            RequestInput::Messages(_) => format!("{base}/v1/chat/completions"),
        }
    }

    fn body(&self, request: &CompletionRequest) -> Value {
        let p = &request.params;
        let mut body = json!({
            "model": self.config.model_id,
            "max_tokens": p.max_tokens,
            "temperature": p.temperature,
            "top_p": p.top_p,
            "n": p.n_samples,
        });
        if !p.stop_sequences.is_empty() {
            body["stop"] = json!(p.stop_sequences);
        }
        match &request.input {
            RequestInput::Prompt(text) => body["prompt"] = json!(text),
            RequestInput::Messages(msgs) => body["messages"] = json!(msgs),
        }
        body
    }

    fn bearer_token(&self) -> Result<Option<String>> {
        match &self.config.api_key_env {
            None => Ok(None),
            Some(var) => match std::env::var(var) {
                Ok(key) => Ok(Some(key)),
                Err(_) => Err(Error::InvalidConfig {
                    detail: format!("api key environment variable '{var}' is not set"),
                }),
            },
        }
    }

    /// Deterministic jitter so backoff is reproducible in tests.
    fn backoff(&self, attempt: u32, key: &str) -> Duration {
        let base = self.config.retry.backoff_base_ms;
        let jitter = derive_seed(attempt as u64, key) % (base / 2 + 1);
        Duration::from_millis(base.saturating_mul(1 << attempt.min(10)) + jitter)
    }

    fn extract_texts(&self, input: &RequestInput, value: &Value, n: usize) -> Result<Vec<String>> {
        let choices = value
            .get("choices")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Transport {
                attempts: 1,
                detail: "response has no choices array".into(),
            })?;
        if choices.len() != n {
            return Err(Error::Transport {
                attempts: 1,
                detail: format!("expected {n} choices, got {}", choices.len()),
            });
        }
        choices
            .iter()
            .map(|choice| {
                let text = match input {
                    RequestInput::Prompt(_) => choice.get("text").and_then(Value::as_str),
                    RequestInput::Messages(_) => choice
                        .get("message")
                        .and_then(|m| m.get("content"))
                        .and_then(Value::as_str),
                };
                text.map(str::to_string).ok_or_else(|| Error::Transport {
                    attempts: 1,
                    detail: "choice missing text content".into(),
                })
            })
            .collect()
    }
}

enum AttemptError {
    Retryable(String),
    RateLimited,
    Fatal(String),
}

impl Provider for HttpProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<String>> {
        request.params.validate()?;
        let key = request.cache_key(&self.config.model_id);
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(&key) {
                return Ok(hit);
            }
        }

        let token = self.bearer_token()?;
        let url = self.endpoint(&request.input);
        let body = self.body(request);
        let n = request.params.n_samples as usize;

        let _permit = self.gate.acquire();
        let max_attempts = self.config.retry.max_retries + 1;
        let mut rate_limited = false;
        let mut last_detail = String::new();
        for attempt in 0..max_attempts {
            if attempt > 0 {
                std::thread::sleep(self.backoff(attempt - 1, &key));
            }
            let mut builder = self.client.post(&url).json(&body);
            if let Some(token) = &token {
                builder = builder.bearer_auth(token);
            }
            let outcome = match builder.send() {
                Err(e) => AttemptError::Retryable(e.to_string()),
                Ok(resp) => {
                    let status = resp.status();
                    if status.as_u16() == 429 {
                        AttemptError::RateLimited
                    } else if status.is_server_error() {
                        AttemptError::Retryable(format!("server error {status}"))
                    } else if !status.is_success() {
                        AttemptError::Fatal(format!("http status {status}"))
                    } else {
                        match resp.json::<Value>() {
                            Err(e) => AttemptError::Retryable(format!("bad json: {e}")),
                            Ok(value) => {
                                let texts = self.extract_texts(&request.input, &value, n)?;
                                let texts: Vec<String> = texts
                                    .iter()
                                    .map(|t| {
                                        apply_stop_sequences(t, &request.params.stop_sequences)
                                    })
                                    .collect();
                                if let Some(cache) = &self.cache {
                                    cache.put(&key, &texts)?;
                                }
                                return Ok(texts);
                            }
                        }
                    }
                }
            };
            match outcome {
                AttemptError::Retryable(detail) => {
                    log::warn!("attempt {}/{max_attempts} failed: {detail}", attempt + 1);
                    last_detail = detail;
                }
                AttemptError::RateLimited => {
                    log::warn!("attempt {}/{max_attempts} rate limited", attempt + 1);
                    rate_limited = true;
                    last_detail = "rate limited".into();
                }
                AttemptError::Fatal(detail) => {
                    return Err(Error::Transport {
                        attempts: attempt + 1,
                        detail,
                    });
                }
            }
        }
        if rate_limited {
            Err(Error::RateLimited)
        } else {
            Err(Error::Transport {
                attempts: max_attempts,
                detail: last_detail,
            })
        }
    }

    fn model_id(&self) -> &str {
        &self.config.model_id
    }

    fn mode(&self) -> ProviderMode {
        self.config.mode
    }
}
