use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::json;

use super::{ChatBackend, ChatRequest, ChatResponse, LlmError, Usage};

/// Environment variable holding the bearer token for the HTTP backend.
pub const API_KEY_ENV: &str = "OPENAI_API_KEY";

#[derive(Clone)]
pub struct HttpConfig {
    /// Base URL such as `http://localhost:8000/v1`, or a full `/chat/completions` URL.
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub audit_path: Option<PathBuf>,
}

impl std::fmt::Debug for HttpConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpConfig")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("has_api_key", &self.api_key.is_some())
            .field("timeout", &self.timeout)
            .field("max_retries", &self.max_retries)
            .field("backoff_base", &self.backoff_base)
            .field("audit_path", &self.audit_path)
            .finish()
    }
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            timeout: Duration::from_secs(60),
            max_retries: 5,
            backoff_base: Duration::from_secs(1),
            audit_path: None,
        }
    }

    fn url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

/// OpenAI-compatible chat-completions client with exponential backoff.
pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
    audit: Option<Mutex<File>>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

enum Failure {
    Retryable(LlmError),
    Fatal(LlmError),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, LlmError> {
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        let audit = match &config.audit_path {
            Some(p) => Some(Mutex::new(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(p)
                    .map_err(|e| LlmError::Config(format!("audit file {}: {e}", p.display())))?,
            )),
            None => None,
        };
        Ok(Self {
            config,
            agent,
            audit,
        })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    /// Delay slept before retry number `retry` (0-based).
    pub fn backoff_delay(&self, retry: u32) -> Duration {
        self.config.backoff_base * 2u32.saturating_pow(retry)
    }

    fn wire_body(&self, request: &ChatRequest) -> serde_json::Value {
        let model = if request.model.is_empty() {
            &self.config.model
        } else {
            &request.model
        };
        json!({
            "model": model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        })
    }

    fn send_once(&self, body: &serde_json::Value, attempt: u32) -> Result<WireResponse, Failure> {
        let mut req = self
            .agent
            .post(&self.config.url())
            .set("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        match req.send_json(body) {
            Ok(resp) => resp
                .into_json::<WireResponse>()
                .map_err(|e| Failure::Fatal(LlmError::Schema(e.to_string()))),
            Err(ureq::Error::Status(status, resp)) => {
                let text = resp.into_string().unwrap_or_default();
                let err = LlmError::Status {
                    status,
                    attempts: attempt,
                    body: text,
                };
                if status == 429 || (500..600).contains(&status) {
                    Err(Failure::Retryable(err))
                } else {
                    Err(Failure::Fatal(err))
                }
            }
            Err(ureq::Error::Transport(t)) => Err(Failure::Retryable(LlmError::Network {
                attempts: attempt,
                message: t.to_string(),
            })),
        }
    }

    fn write_audit(&self, request: &ChatRequest, outcome: &Result<ChatResponse, LlmError>) {
        let Some(audit) = &self.audit else { return };
        let entry = match outcome {
            Ok(r) => json!({
                "model": request.model,
                "messages": request.messages,
                "temperature": request.temperature,
                "content": r.content,
                "attempts": r.attempts,
                "backoff_ms": r.backoff.iter().map(|d| d.as_millis() as u64).collect::<Vec<_>>(),
                "latency_ms": r.latency.as_millis() as u64,
            }),
            Err(e) => json!({
                "model": request.model,
                "messages": request.messages,
                "error": e.to_string(),
            }),
        };
        let mut f = audit.lock().expect("audit lock");
        if let Err(e) = writeln!(f, "{entry}") {
            log::warn!("could not write audit entry: {e}");
        }
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate()?;
        let body = self.wire_body(request);
        let started = Instant::now();
        let mut backoff = Vec::new();
        let mut attempt = 0u32;
        let outcome = loop {
            attempt += 1;
            match self.send_once(&body, attempt) {
                Ok(wire) => {
                    let choice = match wire.choices.into_iter().next() {
                        Some(c) => c,
                        None => break Err(LlmError::Schema("response has no choices".into())),
                    };
                    break Ok(ChatResponse {
                        content: choice.message.content.unwrap_or_default(),
                        usage: wire.usage,
                        latency: started.elapsed(),
                        attempts: attempt,
                        backoff,
                    });
                }
                Err(Failure::Fatal(e)) => break Err(e),
                Err(Failure::Retryable(e)) => {
                    if attempt > self.config.max_retries {
                        break Err(e);
                    }
                    let delay = self.backoff_delay(attempt - 1);
                    log::warn!(
                        "request failed (attempt {attempt}), retrying in {} ms: {e}",
                        delay.as_millis()
                    );
                    backoff.push(delay);
                    thread::sleep(delay);
                }
            }
        };
        self.write_audit(request, &outcome);
        outcome
    }

    fn kind(&self) -> &'static str {
        "http"
    }
}
