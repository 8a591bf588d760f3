//! Splitting teacher turns into elementary discourse units.
//!
//! Punctuation is stripped from a turn, restored by a [`PunctuationRestorer`],
//! and the two versions are aligned token by token. Sentence ends in the
//! original always split; a comma in the original that the restorer turned
//! into `.`, `?` or `!` becomes an extra split point.

mod restorer;

pub use restorer::{
    restore_punctuation, HttpRestorer, PunctuationRestorer, RestoreError, RestorerKind,
    RuleBasedRestorer, ScriptedRestorer,
};

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Dialog, Edu, Speaker, SplitName, Utterance};
use crate::util::ordered_map;

#[derive(Debug, Error, PartialEq)]
pub enum SegmentError {
    #[error("turn {turn_index} of `{dialog_id}` is a student turn")]
    StudentTurn { dialog_id: String, turn_index: usize },
    #[error("turn {turn_index} of `{dialog_id}` has no coarse label")]
    Unlabeled { dialog_id: String, turn_index: usize },
}

/// Abbreviations whose final period never ends a sentence.
const ABBREVIATIONS: &[&str] = &[
    "mr.", "mrs.", "ms.", "dr.", "prof.", "st.", "jr.", "sr.", "vs.", "etc.", "e.g.", "i.e.",
    "approx.",
];

fn is_quote(c: char) -> bool {
    matches!(c, '"' | '\u{201C}' | '\u{201D}' | '\u{201E}' | '\u{00AB}' | '\u{00BB}')
}

fn is_single_quote(c: char) -> bool {
    matches!(c, '\u{2018}' | '\u{2019}')
}

/// Whether `c` acts as stripped punctuation given its neighbours.
fn is_punct(c: char, prev: Option<char>, next: Option<char>) -> bool {
    let digit = |o: Option<char>| o.is_some_and(|c| c.is_ascii_digit());
    let alnum = |o: Option<char>| o.is_some_and(|c| c.is_alphanumeric());
    match c {
        '.' | ',' | ':' if digit(prev) && digit(next) => false,
        '.' | ',' | ';' | ':' | '!' | '?' | '\u{2026}' => true,
        c if is_quote(c) => true,
        c if is_single_quote(c) => !(alnum(prev) && alnum(next)),
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpan {
    /// Byte range in the stripped text.
    pub stripped: Range<usize>,
    /// Byte range in the original text.
    pub original: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stripped {
    pub text: String,
    pub map: Vec<TokenSpan>,
}

/// Byte spans of the punctuation-free tokens of `text`.
fn token_spans(text: &str) -> Vec<Range<usize>> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    for (k, &(pos, c)) in chars.iter().enumerate() {
        let prev = k.checked_sub(1).map(|j| chars[j].1);
        let next = chars.get(k + 1).map(|&(_, c)| c);
        let boundary = c.is_whitespace() || is_punct(c, prev, next);
        match (boundary, start) {
            (true, Some(s)) => {
                spans.push(s..pos);
                start = None;
            }
            (false, None) => start = Some(pos),
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push(s..text.len());
    }
    spans
}

/// Removes punctuation, leaving the tokens joined by single spaces, and
/// records where each token came from.
///
/// Punctuation separates tokens, so `"a.b,c!"` becomes `"a b c"`. Periods,
/// commas and colons between digits (`3.5`, `1,000`, `10:30`) and
/// apostrophes inside words are kept.
pub fn strip_punctuation(text: &str) -> Stripped {
    let mut out = String::new();
    let mut map = Vec::new();
    for span in token_spans(text) {
        if !out.is_empty() {
            out.push(' ');
        }
        let start = out.len();
        out.push_str(&text[span.clone()]);
        map.push(TokenSpan {
            stripped: start..out.len(),
            original: span,
        });
    }
    Stripped { text: out, map }
}

/// Lowercased punctuation-free token sequence.
pub(crate) fn normalized_tokens(text: &str) -> Vec<String> {
    token_spans(text)
        .into_iter()
        .map(|r| text[r].to_lowercase())
        .collect()
}

fn has_terminal(gap: &str) -> bool {
    gap.contains(['.', '?', '!'])
}

/// True when the gap after the token ending at `end` holds a sentence end.
fn ends_sentence(text: &str, end: usize, gap: &str) -> bool {
    if gap.contains(['?', '!']) {
        return true;
    }
    let Some(dot) = gap.find('.') else {
        return false;
    };
    let word_start = text[..end]
        .rfind(char::is_whitespace)
        .map(|i| i + text[i..].chars().next().map_or(1, char::len_utf8))
        .unwrap_or(0);
    let word = text[word_start..end + dot + 1].to_lowercase();
    !ABBREVIATIONS.contains(&word.as_str())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentOutcome {
    pub edus: Vec<String>,
    /// False when the restored tokens did not line up and only sentence
    /// boundaries were used.
    pub aligned: bool,
}

/// Splits `original` into EDU texts using `restored` as the punctuation oracle.
pub fn segment_utterance(original: &str, restored: &str) -> Vec<String> {
    segment_with_alignment(original, restored).edus
}

pub fn segment_with_alignment(original: &str, restored: &str) -> SegmentOutcome {
    let spans = token_spans(original);
    if spans.is_empty() {
        let t = original.trim();
        return SegmentOutcome {
            edus: if t.is_empty() { vec![] } else { vec![t.to_string()] },
            aligned: true,
        };
    }
    let restored_spans = token_spans(restored);
    let aligned = restored_spans.len() == spans.len()
        && spans
            .iter()
            .zip(&restored_spans)
            .all(|(a, b)| original[a.clone()].to_lowercase() == restored[b.clone()].to_lowercase());

    let mut cuts = Vec::new();
    for i in 0..spans.len() - 1 {
        let gap = &original[spans[i].end..spans[i + 1].start];
        // Cuts land after the last whitespace of the gap, so only punctuation
        // before it counts.
        let Some((ws, c)) = gap.char_indices().rev().find(|(_, c)| c.is_whitespace()) else {
            continue;
        };
        let head = &gap[..ws];
        let sentence = ends_sentence(original, spans[i].end, head);
        let promoted = aligned
            && head.contains(',')
            && !has_terminal(gap)
            && has_terminal(&restored[restored_spans[i].end..restored_spans[i + 1].start]);
        if sentence || promoted {
            cuts.push(spans[i].end + ws + c.len_utf8());
        }
    }

    let mut edus = Vec::with_capacity(cuts.len() + 1);
    let mut from = 0;
    for cut in cuts.into_iter().chain(std::iter::once(original.len())) {
        let piece = original[from..cut].trim();
        if !piece.is_empty() {
            edus.push(piece.to_string());
        }
        from = cut;
    }
    SegmentOutcome { edus, aligned }
}

/// Number of sentences in `text` (segmentation without any restorer input).
pub fn sentence_count(text: &str) -> usize {
    segment_utterance(text, text).len()
}

/// Strips, restores and segments one turn. A restorer whose output drops or
/// adds tokens degrades to sentence-only splitting.
pub fn segment_turn(
    original: &str,
    restorer: &dyn PunctuationRestorer,
) -> Result<SegmentOutcome, RestoreError> {
    let stripped = strip_punctuation(original);
    if stripped.text.is_empty() {
        return Ok(segment_with_alignment(original, original));
    }
    match restore_punctuation(&stripped.text, restorer) {
        Ok(restored) => Ok(segment_with_alignment(original, &restored)),
        Err(RestoreError::TokenMismatch { .. }) => {
            let mut outcome = segment_with_alignment(original, original);
            outcome.aligned = false;
            Ok(outcome)
        }
        Err(e) => Err(e),
    }
}

fn make_edus(dialog_id: &str, turn_index: usize, texts: &[String], label: Option<crate::taxonomy::Category>) -> Vec<Edu> {
    texts
        .iter()
        .enumerate()
        .map(|(k, t)| Edu {
            dialog_id: dialog_id.to_string(),
            turn_index,
            edu_index: k,
            text: t.clone(),
            inherited_label: label,
            fine_intent: None,
            annotation_path: None,
            annotation_error: None,
        })
        .collect()
}

/// Builds EDUs for a labeled teacher turn, each carrying the turn's label.
pub fn inherit_labels(utterance: &Utterance, edu_texts: &[String]) -> Result<Vec<Edu>, SegmentError> {
    if utterance.speaker != Speaker::Teacher {
        return Err(SegmentError::StudentTurn {
            dialog_id: utterance.dialog_id.clone(),
            turn_index: utterance.turn_index,
        });
    }
    let label = utterance.coarse_label.ok_or_else(|| SegmentError::Unlabeled {
        dialog_id: utterance.dialog_id.clone(),
        turn_index: utterance.turn_index,
    })?;
    Ok(make_edus(
        &utterance.dialog_id,
        utterance.turn_index,
        edu_texts,
        Some(label),
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TurnRef {
    pub dialog_id: String,
    pub turn_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnIssue {
    pub dialog_id: String,
    pub turn_index: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub teacher_turns: usize,
    pub edus: usize,
    pub unchanged_turns: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationReport {
    pub teacher_turns: usize,
    pub segmented_turns: usize,
    pub total_edus: usize,
    /// Turns that produced exactly one EDU.
    pub unchanged_turns: usize,
    pub unchanged: Vec<TurnRef>,
    /// Keyed by split name, or `unsplit`.
    pub per_split: BTreeMap<String, SplitCounts>,
    pub warnings: Vec<TurnIssue>,
    pub errors: Vec<TurnIssue>,
}

impl SegmentationReport {
    /// Counts over an already segmented corpus.
    pub fn from_corpus(dialogs: &[Dialog]) -> Self {
        let mut report = Self::default();
        for d in dialogs {
            let key = d.split.map_or("unsplit", SplitName::as_str).to_string();
            for (i, t) in d.teacher_turns() {
                report.teacher_turns += 1;
                let counts = report.per_split.entry(key.clone()).or_default();
                counts.teacher_turns += 1;
                if let Some(edus) = &t.edus {
                    report.segmented_turns += 1;
                    report.total_edus += edus.len();
                    counts.edus += edus.len();
                    if edus.len() == 1 {
                        report.unchanged_turns += 1;
                        counts.unchanged_turns += 1;
                        report.unchanged.push(TurnRef {
                            dialog_id: d.id.clone(),
                            turn_index: i,
                        });
                    }
                }
            }
        }
        report
    }

    pub fn is_unchanged(&self, dialog_id: &str, turn_index: usize) -> bool {
        self.unchanged
            .iter()
            .any(|r| r.dialog_id == dialog_id && r.turn_index == turn_index)
    }
}

/// Segments every teacher turn. Restorer failures are recorded per turn and
/// leave that turn unsegmented.
pub fn segment_corpus(
    dialogs: &[Dialog],
    restorer: &dyn PunctuationRestorer,
    max_inflight: usize,
) -> (Vec<Dialog>, SegmentationReport) {
    let jobs: Vec<(usize, usize)> = dialogs
        .iter()
        .enumerate()
        .flat_map(|(di, d)| d.teacher_turns().map(move |(ti, _)| (di, ti)))
        .collect();
    let results = ordered_map(&jobs, max_inflight, |&(di, ti)| {
        segment_turn(&dialogs[di].turns[ti].text, restorer)
    });

    let mut out = dialogs.to_vec();
    let mut warnings = Vec::new();
    let mut errors = Vec::new();
    for (&(di, ti), result) in jobs.iter().zip(results) {
        let dialog = &mut out[di];
        let issue = |message: String| TurnIssue {
            dialog_id: dialog.id.clone(),
            turn_index: ti,
            message,
        };
        match result {
            Ok(outcome) => {
                if !outcome.aligned {
                    warnings.push(issue(
                        "restored tokens did not align; split at sentence boundaries only".into(),
                    ));
                }
                let turn = &dialog.turns[ti];
                let edus = make_edus(&dialog.id, ti, &outcome.edus, turn.coarse_label);
                dialog.turns[ti].edus = Some(edus);
            }
            Err(e) => {
                errors.push(issue(e.to_string()));
                dialog.turns[ti].edus = None;
            }
        }
    }
    let mut report = SegmentationReport::from_corpus(&out);
    report.warnings = warnings;
    report.errors = errors;
    (out, report)
}
