//! Chat-completion backends: an OpenAI-compatible HTTP client and scripted mocks.

mod http;
mod mock;

pub use http::{HttpBackend, HttpConfig, API_KEY_ENV};
pub use mock::{FnBackend, MockScript, Rule, ScriptedBackend};

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend configuration error: {0}")]
    Config(String),
    #[error("network error after {attempts} attempt(s): {message}")]
    Network { attempts: u32, message: String },
    #[error("HTTP status {status} after {attempts} attempt(s): {body}")]
    Status {
        status: u16,
        attempts: u32,
        body: String,
    },
    #[error("response schema violation: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
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
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub model: String,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        Self {
            messages,
            temperature: 0.0,
            max_tokens: 256,
            model: model.into(),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        match self.messages.last() {
            None => return Err(LlmError::InvalidRequest("no messages".into())),
            Some(m) if m.role != Role::User => {
                return Err(LlmError::InvalidRequest(
                    "last message must have the user role".into(),
                ))
            }
            _ => {}
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::InvalidRequest("temperature must be >= 0".into()));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_tokens must be > 0".into()));
        }
        Ok(())
    }

    pub fn last_user_message(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub usage: Option<Usage>,
    pub latency: Duration,
    /// Total requests sent, including the successful one.
    pub attempts: u32,
    /// Delays slept before each retry.
    pub backoff: Vec<Duration>,
}

impl ChatResponse {
    pub fn immediate(content: impl Into<String>) -> Self {
        Self {
            content: content.into(),
            usage: None,
            latency: Duration::ZERO,
            attempts: 1,
            backoff: Vec::new(),
        }
    }
}

/// A chat-completion backend shareable across annotation workers.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError>;

    fn kind(&self) -> &'static str;
}

impl<B: ChatBackend + ?Sized> ChatBackend for &B {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).complete(request)
    }

    fn kind(&self) -> &'static str {
        (**self).kind()
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).complete(request)
    }

    fn kind(&self) -> &'static str {
        (**self).kind()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_validation() {
        let ok = ChatRequest::new("m", vec![ChatMessage::system("s"), ChatMessage::user("u")]);
        assert!(ok.validate().is_ok());
        assert!(ChatRequest::new("m", vec![]).validate().is_err());
        let bad = ChatRequest::new("m", vec![ChatMessage::user("u"), ChatMessage::assistant("a")]);
        assert!(bad.validate().is_err());
        let mut neg = ok.clone();
        neg.temperature = -0.5;
        assert!(neg.validate().is_err());
        let mut zero = ok;
        zero.max_tokens = 0;
        assert!(zero.validate().is_err());
    }
}
