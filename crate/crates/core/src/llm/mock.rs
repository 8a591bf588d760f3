use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatRequest, ChatResponse, LlmError};

/// A conjunctive match rule: answers when every term occurs in the last user message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub all: Vec<String>,
    pub answer: String,
}

/// File form of a scripted backend. Either a queue of answers served in order,
/// or substring patterns / conjunctive rules matched against the last user message.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub queue: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub patterns: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rules: Vec<Rule>,
}

enum Script {
    Queue(Mutex<VecDeque<String>>),
    Rules(Vec<Rule>),
}

/// Deterministic backend for tests and offline runs.
pub struct ScriptedBackend {
    script: Script,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn queue<I, S>(answers: I) -> Result<Self, LlmError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let q: VecDeque<String> = answers.into_iter().map(Into::into).collect();
        if q.is_empty() {
            return Err(LlmError::Config("empty answer queue".into()));
        }
        Ok(Self {
            script: Script::Queue(Mutex::new(q)),
            calls: AtomicUsize::new(0),
        })
    }

    /// Single-substring patterns. A pattern contained in another is rejected,
    /// since any prompt matching the longer one also matches the shorter.
    pub fn patterns<I, K, V>(map: I) -> Result<Self, LlmError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        Self::rules(map.into_iter().map(|(k, v)| Rule {
            all: vec![k.into()],
            answer: v.into(),
        }))
    }

    pub fn rules<I: IntoIterator<Item = Rule>>(rules: I) -> Result<Self, LlmError> {
        let rules: Vec<Rule> = rules.into_iter().collect();
        if rules.is_empty() {
            return Err(LlmError::Config("empty script".into()));
        }
        for r in &rules {
            if r.all.is_empty() || r.all.iter().any(|t| t.is_empty()) {
                return Err(LlmError::Config("rule with an empty term".into()));
            }
        }
        for (i, a) in rules.iter().enumerate() {
            for (j, b) in rules.iter().enumerate() {
                if i != j && subsumed(a, b) {
                    return Err(LlmError::Config(format!(
                        "ambiguous script: rule {:?} matches every prompt that rule {:?} matches",
                        a.all, b.all
                    )));
                }
            }
        }
        Ok(Self {
            script: Script::Rules(rules),
            calls: AtomicUsize::new(0),
        })
    }

    pub fn from_script(script: MockScript) -> Result<Self, LlmError> {
        let has_rules = !script.patterns.is_empty() || !script.rules.is_empty();
        match (script.queue.is_empty(), has_rules) {
            (false, true) => Err(LlmError::Config(
                "script mixes an answer queue with match rules".into(),
            )),
            (false, false) => Self::queue(script.queue),
            (true, _) => Self::rules(
                script
                    .patterns
                    .into_iter()
                    .map(|(k, v)| Rule {
                        all: vec![k],
                        answer: v,
                    })
                    .chain(script.rules),
            ),
        }
    }

    pub fn from_json(doc: &str) -> Result<Self, LlmError> {
        let script: MockScript =
            serde_json::from_str(doc).map_err(|e| LlmError::Config(e.to_string()))?;
        Self::from_script(script)
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

/// True when every term of `a` occurs inside some term of `b`.
fn subsumed(a: &Rule, b: &Rule) -> bool {
    a.all
        .iter()
        .all(|ta| b.all.iter().any(|tb| tb.contains(ta.as_str())))
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        match &self.script {
            Script::Queue(q) => q
                .lock()
                .expect("mock queue lock")
                .pop_front()
                .map(ChatResponse::immediate)
                .ok_or_else(|| LlmError::Config("scripted answers exhausted".into())),
            Script::Rules(rules) => {
                let prompt = request.last_user_message();
                let mut hits = rules
                    .iter()
                    .filter(|r| r.all.iter().all(|t| prompt.contains(t.as_str())));
                match (hits.next(), hits.next()) {
                    (Some(r), None) => Ok(ChatResponse::immediate(r.answer.clone())),
                    (None, _) => Err(LlmError::Config("no scripted rule matches the prompt".into())),
                    (Some(a), Some(b)) => Err(LlmError::Config(format!(
                        "prompt matches several rules: {:?} and {:?}",
                        a.all, b.all
                    ))),
                }
            }
        }
    }

    fn kind(&self) -> &'static str {
        "mock"
    }
}

/// Backend answering through a closure.
pub struct FnBackend<F> {
    f: F,
}

impl<F> FnBackend<F>
where
    F: Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self { f }
    }
}

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate()?;
        (self.f)(request).map(ChatResponse::immediate)
    }

    fn kind(&self) -> &'static str {
        "fn"
    }
}
