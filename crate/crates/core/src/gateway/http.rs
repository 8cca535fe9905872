use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::Engine;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatBackend, ChatRequest, ChatResponse, GatewayError, Part};

/// Environment variable holding the bearer credential.
pub const API_KEY_ENV: &str = "FINVISION_API_KEY";

const BODY_EXCERPT: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay_ms: u64,
    /// Relative jitter applied to each delay, e.g. 0.2 for +/-20%.
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay_ms: 1_000,
            jitter: 0.2,
        }
    }
}

impl RetryPolicy {
    fn delay(&self, retry: u32) -> Duration {
        let base = self.base_delay_ms as f64 * 2f64.powi(retry as i32);
        let factor = if self.jitter > 0.0 {
            1.0 + rand::rng().random_range(-self.jitter..=self.jitter)
        } else {
            1.0
        };
        Duration::from_millis((base * factor).max(0.0) as u64)
    }
}

struct Semaphore {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            permits: Mutex::new(n.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut p = self.permits.lock().unwrap();
        while *p == 0 {
            p = self.freed.wait(p).unwrap();
        }
        *p -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap() += 1;
        self.0.freed.notify_one();
    }
}

/// Client for `POST {base_url}/chat/completions`.
pub struct HttpBackend {
    base_url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    agent: ureq::Agent,
    limit: Semaphore,
    requests_sent: AtomicU64,
}

impl HttpBackend {
    pub fn new(
        base_url: &str,
        api_key: Option<String>,
        timeout: Duration,
        max_concurrency: usize,
        retry: RetryPolicy,
    ) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            retry,
            agent: config.into(),
            limit: Semaphore::new(max_concurrency),
            requests_sent: AtomicU64::new(0),
        }
    }

    /// Credential taken from [`API_KEY_ENV`].
    pub fn from_env(
        base_url: &str,
        timeout: Duration,
        max_concurrency: usize,
        retry: RetryPolicy,
    ) -> Self {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::new(base_url, key, timeout, max_concurrency, retry)
    }

    pub fn requests_sent(&self) -> u64 {
        self.requests_sent.load(Ordering::Relaxed)
    }

    /// JSON body in the chat-completions wire format.
    pub fn wire_body(request: &ChatRequest) -> Value {
        let messages: Vec<Value> = request
            .messages
            .iter()
            .map(|m| {
                let content: Vec<Value> = m
                    .parts
                    .iter()
                    .map(|p| match p {
                        Part::Text(t) => json!({"type": "text", "text": t}),
                        Part::Image { media_type, data } => {
                            let b64 = base64::engine::general_purpose::STANDARD.encode(data);
                            json!({
                                "type": "image_url",
                                "image_url": {"url": format!("data:{media_type};base64,{b64}")}
                            })
                        }
                    })
                    .collect();
                json!({"role": m.role, "content": content})
            })
            .collect();
        json!({
            "model": request.model,
            "temperature": request.temperature,
            "messages": messages,
        })
    }

    fn attempt(&self, body: &str) -> Result<ChatResponse, GatewayError> {
        let url = format!("{}/chat/completions", self.base_url);
        let mut req = self
            .agent
            .post(&url)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        self.requests_sent.fetch_add(1, Ordering::Relaxed);
        let resp = req.send(body).map_err(map_ureq)?;
        let status = resp.status().as_u16();
        let text = resp.into_body().read_to_string().map_err(map_ureq)?;
        if !(200..300).contains(&status) {
            let body: String = text.chars().take(BODY_EXCERPT).collect();
            return Err(GatewayError::Status { status, body });
        }
        parse_completion(&text)
    }
}

fn map_ureq(e: ureq::Error) -> GatewayError {
    match e {
        ureq::Error::Timeout(_) => GatewayError::Timeout,
        ureq::Error::StatusCode(status) => GatewayError::Status {
            status,
            body: String::new(),
        },
        other => GatewayError::Transport(other.to_string()),
    }
}

#[derive(Deserialize)]
struct Completion {
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
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize, Default)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

fn parse_completion(text: &str) -> Result<ChatResponse, GatewayError> {
    let parsed: Completion =
        serde_json::from_str(text).map_err(|e| GatewayError::Decode(e.to_string()))?;
    let choice = parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| GatewayError::Decode("no choices in response".into()))?;
    let usage = parsed.usage.unwrap_or_default();
    Ok(ChatResponse {
        text: choice.message.content.unwrap_or_default(),
        prompt_tokens: usage.prompt_tokens,
        completion_tokens: usage.completion_tokens,
        backend_id: "http".into(),
    })
}

impl ChatBackend for HttpBackend {
    fn id(&self) -> String {
        "http".into()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let body = Self::wire_body(request).to_string();
        let _permit = self.limit.acquire();
        let mut retry = 0;
        loop {
            match self.attempt(&body) {
                Err(e) if e.is_retryable() && retry < self.retry.max_retries => {
                    log::warn!("chat completion failed ({e}); retry {}", retry + 1);
                    std::thread::sleep(self.retry.delay(retry));
                    retry += 1;
                }
                other => return other,
            }
        }
    }
}
