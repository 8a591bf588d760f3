use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::normalized_tokens;

#[derive(Debug, Error, PartialEq)]
pub enum RestoreError {
    #[error("restorer unavailable: {0}")]
    Backend(String),
    #[error("restorer changed the token sequence: expected {expected:?}, got {got:?}")]
    TokenMismatch {
        expected: Vec<String>,
        got: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RestorerKind {
    ExternalService,
    RuleBasedFallback,
    Scripted,
}

/// Re-inserts punctuation into punctuation-free text. Implementations must
/// keep the token sequence intact; [`restore_punctuation`] enforces this.
pub trait PunctuationRestorer: Send + Sync {
    fn restore(&self, stripped: &str) -> Result<String, RestoreError>;

    fn kind(&self) -> RestorerKind;
}

/// Restores `stripped` and checks that only punctuation and case changed.
pub fn restore_punctuation(
    stripped: &str,
    backend: &dyn PunctuationRestorer,
) -> Result<String, RestoreError> {
    let restored = backend.restore(stripped)?;
    let expected = normalized_tokens(stripped);
    let got = normalized_tokens(&restored);
    if expected != got {
        return Err(RestoreError::TokenMismatch { expected, got });
    }
    Ok(restored)
}

const LEAD_FILLERS: &[&str] = &[
    "so", "and", "but", "ok", "okay", "now", "then", "well", "alright", "right", "great", "hmm",
];

const INTERROGATIVES: &[&str] = &[
    "what", "why", "how", "when", "where", "who", "whom", "whose", "which", "can", "could",
    "would", "will", "do", "does", "did", "is", "are", "was", "were", "should", "shall", "have",
    "has", "may", "might", "am", "isn't", "aren't", "don't", "doesn't", "didn't", "can't",
    "won't",
];

/// Offline restorer: treats the input as one sentence, capitalizes it, and
/// ends it with `?` when it opens (after filler words) with an interrogative.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleBasedRestorer;

impl PunctuationRestorer for RuleBasedRestorer {
    fn restore(&self, stripped: &str) -> Result<String, RestoreError> {
        let text = stripped.trim();
        if text.is_empty() {
            return Ok(String::new());
        }
        let question = text
            .split_whitespace()
            .map(|w| w.to_lowercase().replace('\u{2019}', "'"))
            .find(|w| !LEAD_FILLERS.contains(&w.as_str()))
            .is_some_and(|w| INTERROGATIVES.contains(&w.as_str()));
        let mut chars = text.chars();
        let first = chars.next().expect("nonempty");
        let mut out: String = first.to_uppercase().chain(chars).collect();
        out.push(if question { '?' } else { '.' });
        Ok(out)
    }

    fn kind(&self) -> RestorerKind {
        RestorerKind::RuleBasedFallback
    }
}

/// Lookup-table restorer for tests.
#[derive(Debug, Clone, Default)]
pub struct ScriptedRestorer {
    table: BTreeMap<String, String>,
}

impl ScriptedRestorer {
    pub fn new<I, K, V>(entries: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        Self {
            table: entries
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
        }
    }
}

impl PunctuationRestorer for ScriptedRestorer {
    fn restore(&self, stripped: &str) -> Result<String, RestoreError> {
        self.table
            .get(stripped)
            .cloned()
            .ok_or_else(|| RestoreError::Backend(format!("no scripted restoration for {stripped:?}")))
    }

    fn kind(&self) -> RestorerKind {
        RestorerKind::Scripted
    }
}

/// Client for a punctuation-restoration service.
///
/// Wire format: `POST <endpoint>` with `{"text": "<stripped>"}`, answered by
/// `{"text": "<restored>"}`.
pub struct HttpRestorer {
    endpoint: String,
    agent: ureq::Agent,
    max_retries: u32,
    backoff_base: Duration,
}

#[derive(Deserialize)]
struct RestoreReply {
    text: String,
}

impl HttpRestorer {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self::with_settings(endpoint, Duration::from_secs(60), 5, Duration::from_secs(1))
    }

    pub fn with_settings(
        endpoint: impl Into<String>,
        timeout: Duration,
        max_retries: u32,
        backoff_base: Duration,
    ) -> Self {
        Self {
            endpoint: endpoint.into(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
            max_retries,
            backoff_base,
        }
    }
}

impl PunctuationRestorer for HttpRestorer {
    fn restore(&self, stripped: &str) -> Result<String, RestoreError> {
        let mut attempt = 0;
        loop {
            let result = self
                .agent
                .post(&self.endpoint)
                .send_json(json!({ "text": stripped }));
            let retryable = match result {
                Ok(resp) => {
                    return resp
                        .into_json::<RestoreReply>()
                        .map(|r| r.text)
                        .map_err(|e| RestoreError::Backend(format!("bad reply: {e}")))
                }
                Err(ureq::Error::Status(code, _)) if code == 429 || code >= 500 => {
                    format!("HTTP {code}")
                }
                Err(ureq::Error::Status(code, _)) => {
                    return Err(RestoreError::Backend(format!("HTTP {code}")))
                }
                Err(ureq::Error::Transport(t)) => t.to_string(),
            };
            if attempt >= self.max_retries {
                return Err(RestoreError::Backend(format!(
                    "{retryable} after {} attempt(s)",
                    attempt + 1
                )));
            }
            std::thread::sleep(self.backoff_base * 2u32.saturating_pow(attempt));
            attempt += 1;
        }
    }

    fn kind(&self) -> RestorerKind {
        RestorerKind::ExternalService
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fallback_marks_questions() {
        let r = RuleBasedRestorer;
        assert_eq!(
            restore_punctuation("So what should you do next", &r).unwrap(),
            "So what should you do next?"
        );
        assert_eq!(
            restore_punctuation("you need to add them", &r).unwrap(),
            "You need to add them."
        );
        assert_eq!(restore_punctuation("", &r).unwrap(), "");
    }

    #[test]
    fn scripted_round_trip() {
        let r = ScriptedRestorer::new([("Hi how are you", "Hi, how are you?")]);
        assert_eq!(
            restore_punctuation("Hi how are you", &r).unwrap(),
            "Hi, how are you?"
        );
    }

    #[test]
    fn extra_token_is_rejected() {
        let r = ScriptedRestorer::new([("Hi how are you", "Hi, how are you doing?")]);
        assert!(matches!(
            restore_punctuation("Hi how are you", &r),
            Err(RestoreError::TokenMismatch { .. })
        ));
    }

    #[test]
    fn unreachable_service() {
        let r = HttpRestorer::with_settings(
            "http://127.0.0.1:9/restore",
            Duration::from_millis(200),
            1,
            Duration::from_millis(1),
        );
        assert!(matches!(r.restore("hi"), Err(RestoreError::Backend(_))));
    }
}
