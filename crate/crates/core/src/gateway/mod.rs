//! Chat-completion abstraction with interchangeable backends.
//!
//! Backends implement [`ChatBackend`] and are selected by name through
//! [`BackendRegistry`]: `http` speaks the OpenAI-compatible protocol,
//! `scripted` replays canned responses, and the `cached-*` kinds wrap
//! either in a content-addressed disk cache.

mod cache;
mod http;
mod registry;
mod scripted;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{cache_clear, cache_stats, CacheStats, CachedBackend};
pub use http::{HttpBackend, RetryPolicy, API_KEY_ENV};
pub use registry::{BackendConfig, BackendFactory, BackendRegistry};
pub use scripted::{ScriptEntry, ScriptedBackend};

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("malformed response: {0}")]
    Decode(String),
    #[error("script exhausted: no entry left for call {call}")]
    ScriptExhausted { call: u64 },
    #[error("backend configuration: {0}")]
    Config(String),
}

impl GatewayError {
    pub(crate) fn is_retryable(&self) -> bool {
        match self {
            GatewayError::Transport(_) | GatewayError::Timeout => true,
            GatewayError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Part {
    Text(String),
    Image { media_type: String, data: Vec<u8> },
}

impl Part {
    pub fn png(data: Vec<u8>) -> Part {
        Part::Image {
            media_type: "image/png".into(),
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub role: Role,
    pub parts: Vec<Part>,
}

impl Message {
    pub fn user(parts: Vec<Part>) -> Self {
        Self {
            role: Role::User,
            parts,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<Message>,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: &str| Err(GatewayError::InvalidRequest(m.to_string()));
        if self.model.trim().is_empty() {
            return bad("empty model name");
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return bad("temperature must be finite and non-negative");
        }
        match self.messages.first() {
            None => return bad("no messages"),
            Some(m) if m.role == Role::Assistant => {
                return bad("first message must be system or user")
            }
            _ => {}
        }
        for m in &self.messages {
            if m.parts.is_empty() {
                return bad("message without parts");
            }
            for p in &m.parts {
                if let Part::Image { media_type, data } = p {
                    if media_type != "image/png" || !data.starts_with(PNG_SIGNATURE) {
                        return bad("image parts must be PNG");
                    }
                }
            }
        }
        Ok(())
    }

    /// Concatenated text parts, used for script matching.
    pub fn prompt_text(&self) -> String {
        self.messages
            .iter()
            .flat_map(|m| &m.parts)
            .filter_map(|p| match p {
                Part::Text(t) => Some(t.as_str()),
                Part::Image { .. } => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
    pub backend_id: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize)]
struct CanonicalRequest<'a> {
    model: &'a str,
    temperature: String,
    messages: Vec<CanonicalMessage>,
}

#[derive(Serialize)]
struct CanonicalMessage {
    role: Role,
    parts: Vec<CanonicalPart>,
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum CanonicalPart {
    Text { text: String },
    Image { media_type: String, sha256: String },
}

/// SHA-256 over a canonical serialization of the request. Images
/// contribute their content digest.
pub fn cache_key(req: &ChatRequest) -> String {
    let canonical = CanonicalRequest {
        model: &req.model,
        // `{:?}` keeps 0.3 and 0.30000000000000004 distinct.
        temperature: format!("{:?}", req.temperature),
        messages: req
            .messages
            .iter()
            .map(|m| CanonicalMessage {
                role: m.role,
                parts: m
                    .parts
                    .iter()
                    .map(|p| match p {
                        Part::Text(t) => CanonicalPart::Text { text: t.clone() },
                        Part::Image { media_type, data } => CanonicalPart::Image {
                            media_type: media_type.clone(),
                            sha256: sha256_hex(data),
                        },
                    })
                    .collect(),
            })
            .collect(),
    };
    let bytes = serde_json::to_vec(&canonical).expect("canonical request serializes");
    sha256_hex(&bytes)
}

/// A chat-completion provider.
pub trait ChatBackend: Send + Sync {
    fn id(&self) -> String;

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;

    /// True when responses depend on call order, so callers must issue
    /// requests sequentially to stay reproducible.
    fn order_sensitive(&self) -> bool {
        false
    }

    /// Resumable position, if the backend has one.
    fn save_state(&self) -> Option<serde_json::Value> {
        None
    }

    fn restore_state(&self, _state: &serde_json::Value) -> Result<(), GatewayError> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_png() -> Vec<u8> {
        let mut v = PNG_SIGNATURE.to_vec();
        v.extend_from_slice(b"rest-of-image");
        v
    }

    fn req(temp: f64, image: Vec<u8>) -> ChatRequest {
        ChatRequest {
            model: "gpt-4o-mini".into(),
            temperature: temp,
            messages: vec![Message::user(vec![
                Part::Text("Analyze this chart".into()),
                Part::png(image),
            ])],
        }
    }

    #[test]
    fn digest_properties() {
        let a = req(0.3, tiny_png());
        assert_eq!(cache_key(&a), cache_key(&a.clone()));
        assert_eq!(cache_key(&a).len(), 64);
        assert_ne!(cache_key(&a), cache_key(&req(1.0, tiny_png())));
        let mut img = tiny_png();
        *img.last_mut().unwrap() ^= 1;
        assert_ne!(cache_key(&a), cache_key(&req(0.3, img)));
    }

    #[test]
    fn request_validation() {
        assert!(req(0.3, tiny_png()).validate().is_ok());
        assert!(req(-1.0, tiny_png()).validate().is_err());
        assert!(req(0.3, b"GIF89a".to_vec()).validate().is_err());
        let mut r = req(0.3, tiny_png());
        r.messages[0].role = Role::Assistant;
        assert!(r.validate().is_err());
        r.messages.clear();
        assert!(r.validate().is_err());
    }

    #[test]
    fn retryable_classes() {
        assert!(GatewayError::Timeout.is_retryable());
        assert!(GatewayError::Status { status: 429, body: String::new() }.is_retryable());
        assert!(GatewayError::Status { status: 503, body: String::new() }.is_retryable());
        assert!(!GatewayError::Status { status: 400, body: String::new() }.is_retryable());
        assert!(!GatewayError::ScriptExhausted { call: 1 }.is_retryable());
    }
}
