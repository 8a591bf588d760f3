//! Tree-guided intent annotation of teacher EDUs.
//!
//! Each EDU is routed from the tree root to a leaf by posing the node's
//! question, with the dialog context and the enumerated answer options, to a
//! chat backend and parsing the reply into one of the options.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Dialog, Edu, PathStep, Speaker};
use crate::llm::{ChatBackend, ChatMessage, ChatRequest, LlmError};
use crate::taxonomy::{canonical_intent, map_to_category, DecisionNode, DecisionTree};
use crate::util::ordered_map;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnswerError {
    #[error("reply {raw:?} matches none of {options:?}")]
    NoMatch { raw: String, options: Vec<String> },
    #[error("reply {raw:?} matches several options: {matches:?}")]
    Ambiguous { raw: String, matches: Vec<String> },
}

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("backend failed at {question:?}: {source}")]
    Backend {
        question: String,
        #[source]
        source: LlmError,
    },
    #[error("no parseable answer to {question:?} after {attempts} attempt(s): {last}")]
    Unparseable {
        question: String,
        attempts: usize,
        last: AnswerError,
    },
    #[error("tree leaf `{0}` is not a canonical intent")]
    InvalidTree(String),
}

fn norm(s: &str) -> String {
    s.trim()
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

fn boundary(s: &str, at: usize) -> bool {
    !s[at..].chars().next().is_some_and(char::is_alphanumeric)
        && !s[..at].chars().next_back().is_some_and(char::is_alphanumeric)
        || at == 0
        || at == s.len()
}

fn contains_word(hay: &str, needle: &str) -> bool {
    hay.match_indices(needle).any(|(i, _)| {
        let before_ok = i == 0 || !hay[..i].chars().next_back().is_some_and(char::is_alphanumeric);
        let end = i + needle.len();
        let after_ok = end == hay.len() || !hay[end..].chars().next().is_some_and(char::is_alphanumeric);
        before_ok && after_ok
    })
}

fn pick(raw: &str, matches: Vec<&str>) -> Option<Result<String, AnswerError>> {
    match matches.len() {
        0 => None,
        1 => Some(Ok(matches[0].to_string())),
        _ => Some(Err(AnswerError::Ambiguous {
            raw: raw.to_string(),
            matches: matches.into_iter().map(String::from).collect(),
        })),
    }
}

/// Maps a free-text reply onto one of `options`: case-insensitive exact match,
/// then unique prefix match, then unique whole-word substring match.
pub fn parse_answer(raw: &str, options: &[&str]) -> Result<String, AnswerError> {
    let r = norm(raw);
    let normed: Vec<(String, &str)> = options.iter().map(|o| (norm(o), *o)).collect();

    let exact = normed.iter().filter(|(n, _)| *n == r).map(|(_, o)| *o).collect();
    if let Some(res) = pick(raw, exact) {
        return res;
    }
    if !r.is_empty() {
        let prefix = normed
            .iter()
            .filter(|(n, _)| {
                !n.is_empty()
                    && ((r.starts_with(n.as_str()) && boundary(&r, n.len()))
                        || n.starts_with(r.as_str()))
            })
            .map(|(_, o)| *o)
            .collect();
        if let Some(res) = pick(raw, prefix) {
            return res;
        }
        let sub = normed
            .iter()
            .filter(|(n, _)| !n.is_empty() && contains_word(&r, n))
            .map(|(_, o)| *o)
            .collect();
        if let Some(res) = pick(raw, sub) {
            return res;
        }
    }
    Err(AnswerError::NoMatch {
        raw: raw.to_string(),
        options: options.iter().map(|o| o.to_string()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationParams {
    /// Preceding turns shown as context.
    pub context_window: usize,
    /// Re-asks per node after an unparseable reply.
    pub retries: usize,
    pub temperature: f64,
    pub max_tokens: u32,
    pub model: String,
    pub max_inflight: usize,
}

impl Default for AnnotationParams {
    fn default() -> Self {
        Self {
            context_window: 5,
            retries: 3,
            temperature: 0.0,
            max_tokens: 32,
            model: "gpt-4o".into(),
            max_inflight: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextLine {
    pub speaker: Speaker,
    pub text: String,
}

pub struct AnnotationRequest<'a> {
    pub edu: &'a Edu,
    /// Chronological, ending right before the EDU.
    pub context: Vec<ContextLine>,
    pub tree: &'a DecisionTree,
}

impl<'a> AnnotationRequest<'a> {
    /// Request for EDU `edu_index` of turn `turn_index`: up to `window`
    /// preceding turns, then the earlier EDUs of the same turn.
    pub fn for_edu(
        dialog: &'a Dialog,
        turn_index: usize,
        edu_index: usize,
        window: usize,
        tree: &'a DecisionTree,
    ) -> Option<Self> {
        let turn = dialog.turns.get(turn_index)?;
        let edus = turn.edus.as_ref()?;
        let edu = edus.get(edu_index)?;
        let first = turn_index.saturating_sub(window);
        let mut context: Vec<ContextLine> = dialog.turns[first..turn_index]
            .iter()
            .map(|t| ContextLine {
                speaker: t.speaker,
                text: t.text.clone(),
            })
            .collect();
        context.extend(edus[..edu_index].iter().map(|e| ContextLine {
            speaker: turn.speaker,
            text: e.text.clone(),
        }));
        Some(Self { edu, context, tree })
    }
}

pub const ANNOTATION_SYSTEM_PROMPT: &str = "You annotate teacher utterances from math tutoring \
dialogs. You will be asked one question about a single utterance. Reply with exactly one of the \
listed options and nothing else.";

/// User message for one tree node. The utterance is wrapped in triple quotes
/// so scripted backends can key on it.
pub fn node_prompt(edu_text: &str, context: &[ContextLine], question: &str, options: &[&str]) -> String {
    let mut s = String::from("Dialog context (oldest first):\n");
    if context.is_empty() {
        s.push_str("(none)\n");
    }
    for line in context {
        s.push_str(&format!("{}: {}\n", line.speaker, line.text));
    }
    s.push_str(&format!("\nUtterance to classify: \"\"\"{edu_text}\"\"\"\n\nQuestion: {question}\nOptions:\n"));
    for o in options {
        s.push_str(&format!("- {o}\n"));
    }
    s.push_str("\nAnswer with exactly one option.");
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationResult {
    pub fine_intent: String,
    pub path: Vec<PathStep>,
    /// Backend calls made.
    pub attempts: usize,
}

pub fn annotate_edu(
    request: &AnnotationRequest<'_>,
    backend: &dyn ChatBackend,
    params: &AnnotationParams,
) -> Result<AnnotationResult, AnnotateError> {
    let mut node = &request.tree.root;
    let mut path = Vec::new();
    let mut attempts = 0;
    loop {
        let (question, options) = match node {
            DecisionNode::Leaf { intent } => {
                return Ok(AnnotationResult {
                    fine_intent: intent.clone(),
                    path,
                    attempts,
                })
            }
            DecisionNode::Question { question, .. } => (question, node.options()),
        };
        let mut chat = ChatRequest::new(
            params.model.clone(),
            vec![
                ChatMessage::system(ANNOTATION_SYSTEM_PROMPT),
                ChatMessage::user(node_prompt(
                    &request.edu.text,
                    &request.context,
                    question,
                    &options,
                )),
            ],
        );
        chat.temperature = params.temperature;
        chat.max_tokens = params.max_tokens;

        let mut chosen = None;
        let mut last = None;
        for _ in 0..=params.retries {
            attempts += 1;
            let reply = backend.complete(&chat).map_err(|source| AnnotateError::Backend {
                question: question.clone(),
                source,
            })?;
            match parse_answer(&reply.content, &options) {
                Ok(a) => {
                    chosen = Some(a);
                    break;
                }
                Err(e) => last = Some(e),
            }
        }
        let Some(answer) = chosen else {
            return Err(AnnotateError::Unparseable {
                question: question.clone(),
                attempts: params.retries + 1,
                last: last.expect("at least one attempt"),
            });
        };
        node = node.child(&answer).expect("parsed answer is a branch label");
        path.push(PathStep {
            question: question.clone(),
            answer,
        });
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    Backend,
    Unparseable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EduIssue {
    pub dialog_id: String,
    pub turn_index: usize,
    pub edu_index: usize,
    pub kind: FailureKind,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationReport {
    pub total_edus: usize,
    pub annotated: usize,
    pub failures: usize,
    pub backend_failures: usize,
    pub backend_calls: usize,
    pub per_intent: BTreeMap<String, usize>,
    pub per_category: BTreeMap<String, usize>,
    pub errors: Vec<EduIssue>,
    /// Wall-clock time; not serialized.
    #[serde(skip)]
    pub elapsed_ms: u64,
}

/// Annotates every teacher EDU. Failures are recorded on the EDU and in the
/// report; the corpus is returned in input order.
pub fn annotate_corpus(
    dialogs: &[Dialog],
    tree: &DecisionTree,
    backend: &dyn ChatBackend,
    params: &AnnotationParams,
) -> Result<(Vec<Dialog>, AnnotationReport), AnnotateError> {
    let started = Instant::now();
    let leaves = tree.root.leaves();
    for (leaf, _) in &leaves {
        if canonical_intent(leaf) != Some(*leaf) {
            return Err(AnnotateError::InvalidTree(leaf.to_string()));
        }
    }

    let jobs: Vec<(usize, usize, usize)> = dialogs
        .iter()
        .enumerate()
        .flat_map(|(di, d)| {
            d.teacher_turns().flat_map(move |(ti, t)| {
                let n = t.edus.as_ref().map_or(0, Vec::len);
                (0..n).map(move |k| (di, ti, k))
            })
        })
        .collect();
    let results = ordered_map(&jobs, params.max_inflight, |&(di, ti, k)| {
        let req = AnnotationRequest::for_edu(&dialogs[di], ti, k, params.context_window, tree)
            .expect("job refers to an existing EDU");
        annotate_edu(&req, backend, params)
    });

    let mut report = AnnotationReport {
        total_edus: jobs.len(),
        per_intent: leaves.iter().map(|(l, _)| (l.to_string(), 0)).collect(),
        ..Default::default()
    };
    let mut out = dialogs.to_vec();
    for (&(di, ti, k), result) in jobs.iter().zip(results) {
        let edu = &mut out[di].turns[ti].edus.as_mut().expect("segmented")[k];
        match result {
            Ok(r) => {
                report.annotated += 1;
                report.backend_calls += r.attempts;
                *report.per_intent.entry(r.fine_intent.clone()).or_default() += 1;
                let cat = map_to_category(&r.fine_intent).expect("canonical leaf");
                *report.per_category.entry(cat.to_string()).or_default() += 1;
                edu.fine_intent = Some(r.fine_intent);
                edu.annotation_path = Some(r.path);
                edu.annotation_error = None;
            }
            Err(e) => {
                report.failures += 1;
                let kind = match e {
                    AnnotateError::Backend { .. } => {
                        report.backend_failures += 1;
                        FailureKind::Backend
                    }
                    _ => FailureKind::Unparseable,
                };
                report.errors.push(EduIssue {
                    dialog_id: edu.dialog_id.clone(),
                    turn_index: ti,
                    edu_index: k,
                    kind,
                    message: e.to_string(),
                });
                edu.fine_intent = None;
                edu.annotation_path = None;
                edu.annotation_error = Some(e.to_string());
            }
        }
    }
    report.elapsed_ms = started.elapsed().as_millis() as u64;
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_exact_case_insensitive() {
        assert_eq!(parse_answer("yes", &["Yes", "No"]).unwrap(), "Yes");
        assert_eq!(parse_answer("  \"No\". ", &["Yes", "No"]).unwrap(), "No");
    }

    #[test]
    fn parse_substring() {
        assert_eq!(
            parse_answer("I think the answer is: No.", &["Yes", "No"]).unwrap(),
            "No"
        );
    }

    #[test]
    fn parse_prefix() {
        assert_eq!(
            parse_answer("Explain their reasoning, since they ask why", &[
                "Explain their reasoning",
                "Check it for a mistake"
            ])
            .unwrap(),
            "Explain their reasoning"
        );
        assert_eq!(parse_answer("Ye", &["Yes", "No"]).unwrap(), "Yes");
    }

    #[test]
    fn parse_failures() {
        assert!(matches!(
            parse_answer("maybe", &["Yes", "No"]),
            Err(AnswerError::NoMatch { .. })
        ));
        assert!(matches!(
            parse_answer("I don't know", &["Yes", "No"]),
            Err(AnswerError::NoMatch { .. })
        ));
        assert!(matches!(
            parse_answer("either yes or no", &["Yes", "No"]),
            Err(AnswerError::Ambiguous { .. })
        ));
        assert!(matches!(
            parse_answer("", &["Yes", "No"]),
            Err(AnswerError::NoMatch { .. })
        ));
    }

    #[test]
    fn prompt_lists_options_in_tree_order() {
        let p = node_prompt("Good job!", &[], "Q?", &["B", "A"]);
        assert!(p.find("- B").unwrap() < p.find("- A").unwrap());
        assert!(p.contains("\"\"\"Good job!\"\"\""));
        assert!(p.contains("(none)"));
    }
}
