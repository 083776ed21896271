//! Chat-completion client with timeouts and jittered exponential backoff.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use rand::Rng;
use serde::Serialize;
use serde_json::Value;

use crate::config::BackendConfig;
use crate::error::{Error, Result};

#[derive(Serialize)]
struct Message<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct Body<'a> {
    model: &'a str,
    messages: [Message<'a>; 1],
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

/// A successful answer.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    /// `choices[0].message.content`, empty when absent.
    pub content: String,
    /// The whole response document.
    pub document: Value,
    /// Requests sent, counting the successful one.
    pub attempts: u32,
}

/// Retry schedule: `max_attempts` tries, sleeping `base * 2^k` scaled by a
/// random factor in `[0.5, 1.5)` between them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32, jitter: f64) -> Duration {
        let factor = 2f64.powi(retry.min(16) as i32) * jitter;
        self.base_delay.mul_f64(factor)
    }
}

/// One chat-completion endpoint.
pub struct EndpointClient {
    url: String,
    model: String,
    api_key: Option<String>,
    policy: RetryPolicy,
    client: reqwest::blocking::Client,
    requests: AtomicU64,
    retries: AtomicU64,
}

impl std::fmt::Debug for EndpointClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EndpointClient")
            .field("url", &self.url)
            .field("model", &self.model)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("policy", &self.policy)
            .finish()
    }
}

impl EndpointClient {
    /// Builds a client; the credential is read from the environment variable
    /// named by `api_key_env`.
    pub fn from_config(cfg: &BackendConfig) -> Result<Self> {
        let url = cfg
            .url
            .clone()
            .ok_or_else(|| Error::Config("endpoint backend needs `url`".into()))?;
        let api_key = match &cfg.api_key_env {
            Some(var) => {
                Some(std::env::var(var).map_err(|_| Error::Config(format!("credential variable {var} is not set")))?)
            }
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(EndpointClient {
            url,
            model: cfg.model.clone().unwrap_or_default(),
            api_key,
            policy: RetryPolicy {
                max_attempts: cfg.max_attempts.max(1),
                base_delay: Duration::from_millis(cfg.base_delay_ms),
            },
            client,
            requests: AtomicU64::new(0),
            retries: AtomicU64::new(0),
        })
    }

    /// Total requests sent and how many of them were retries.
    pub fn stats(&self) -> (u64, u64) {
        (
            self.requests.load(Ordering::Relaxed),
            self.retries.load(Ordering::Relaxed),
        )
    }

    /// Serialized request body; every attempt resends these exact bytes.
    pub fn body(&self, prompt: &str, temperature: f64, max_tokens: Option<u32>) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(&Body {
            model: &self.model,
            messages: [Message {
                role: "user",
                content: prompt,
            }],
            temperature,
            max_tokens,
        })?)
    }

    /// Sends one chat request, retrying timeouts, connection failures and 5xx.
    pub fn complete(&self, prompt: &str, temperature: f64, max_tokens: Option<u32>) -> Result<Completion> {
        let body = self.body(prompt, temperature, max_tokens)?;
        let mut last = String::new();
        for attempt in 1..=self.policy.max_attempts {
            if attempt > 1 {
                self.retries.fetch_add(1, Ordering::Relaxed);
                let jitter = rand::thread_rng().gen_range(0.5..1.5);
                std::thread::sleep(self.policy.delay(attempt - 2, jitter));
            }
            self.requests.fetch_add(1, Ordering::Relaxed);
            let mut req = self
                .client
                .post(&self.url)
                .header(reqwest::header::CONTENT_TYPE, "application/json")
                .body(body.clone());
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Err(e) => {
                    last = if e.is_timeout() {
                        "request timed out".to_string()
                    } else {
                        format!("request failed: {e}")
                    };
                    log::warn!("{} attempt {attempt}: {last}", self.url);
                }
                Ok(resp) => {
                    let status = resp.status();
                    let text = resp.text().unwrap_or_default();
                    if status.is_server_error() {
                        last = format!("HTTP {}", status.as_u16());
                        log::warn!("{} attempt {attempt}: {last}", self.url);
                        continue;
                    }
                    if !status.is_success() {
                        return Err(Error::Http {
                            status: status.as_u16(),
                            body: truncate(&text, 512),
                        });
                    }
                    let document: Value = serde_json::from_str(&text)
                        .map_err(|e| Error::Protocol(format!("response is not JSON: {e}")))?;
                    let content = document
                        .pointer("/choices/0/message/content")
                        .and_then(Value::as_str)
                        .unwrap_or_default()
                        .to_string();
                    return Ok(Completion {
                        content,
                        document,
                        attempts: attempt,
                    });
                }
            }
        }
        Err(Error::Transport {
            attempts: self.policy.max_attempts,
            message: last,
        })
    }
}

fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}

/// Message content of a completion, or a protocol error when it is missing.
pub fn require_content(c: &Completion) -> Result<&str> {
    if c.content.trim().is_empty() {
        Err(Error::Protocol("response has no choices[0].message.content".into()))
    } else {
        Ok(&c.content)
    }
}

/// Value at a dotted path such as `score` or `result.values.0`.
pub fn field_at<'a>(doc: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(doc, |v, key| match v {
        Value::Object(m) => m.get(key),
        Value::Array(a) => key.parse::<usize>().ok().and_then(|i| a.get(i)),
        _ => None,
    })
}
