//! Dialog corpus records and line-delimited JSON I/O.
//!
//! One dialog per line: `{id, question, gold_solution, student_solution, turns[]}`.
//! Segmentation adds `edus` to teacher turns; annotation fills `fine_intent`,
//! `annotation_path` (or `annotation_error`) on each EDU; dataset splitting
//! records `split` on the dialog.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::Category;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("invalid dialog `{dialog}`: {message}")]
    Invalid { dialog: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Teacher,
    Student,
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Speaker::Teacher => "Teacher",
            Speaker::Student => "Student",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Validation, SplitName::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
        }
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStep {
    pub question: String,
    pub answer: String,
}

/// Elementary discourse unit of a teacher turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edu {
    pub dialog_id: String,
    pub turn_index: usize,
    pub edu_index: usize,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inherited_label: Option<Category>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine_intent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation_path: Option<Vec<PathStep>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coarse_label: Option<Category>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edus: Option<Vec<Edu>>,
}

impl Turn {
    pub fn teacher(text: impl Into<String>, label: Option<Category>) -> Self {
        Self {
            speaker: Speaker::Teacher,
            text: text.into(),
            coarse_label: label,
            edus: None,
        }
    }

    pub fn student(text: impl Into<String>) -> Self {
        Self {
            speaker: Speaker::Student,
            text: text.into(),
            coarse_label: None,
            edus: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialog {
    pub id: String,
    pub question: String,
    pub gold_solution: String,
    pub student_solution: String,
    pub turns: Vec<Turn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitName>,
}

impl Dialog {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid = |message: String| CorpusError::Invalid {
            dialog: self.id.clone(),
            message,
        };
        for (i, t) in self.turns.iter().enumerate() {
            if t.speaker == Speaker::Student && t.coarse_label.is_some() {
                return Err(invalid(format!("student turn {i} carries a coarse label")));
            }
            if t.speaker == Speaker::Student && t.edus.is_some() {
                return Err(invalid(format!("student turn {i} is segmented")));
            }
            if let Some(edus) = &t.edus {
                for (k, e) in edus.iter().enumerate() {
                    if e.edu_index != k || e.turn_index != i || e.dialog_id != self.id {
                        return Err(invalid(format!("turn {i} has a misindexed EDU {k}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// All EDUs of the dialog in turn order.
    pub fn edus(&self) -> impl Iterator<Item = &Edu> {
        self.turns.iter().filter_map(|t| t.edus.as_ref()).flatten()
    }

    pub fn teacher_turns(&self) -> impl Iterator<Item = (usize, &Turn)> {
        self.turns
            .iter()
            .enumerate()
            .filter(|(_, t)| t.speaker == Speaker::Teacher)
    }
}

/// Owned view of one turn with its position in the corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub dialog_id: String,
    pub turn_index: usize,
    pub speaker: Speaker,
    pub text: String,
    pub coarse_label: Option<Category>,
}

impl Utterance {
    pub fn from_turn(dialog_id: &str, turn_index: usize, turn: &Turn) -> Self {
        Self {
            dialog_id: dialog_id.to_string(),
            turn_index,
            speaker: turn.speaker,
            text: turn.text.clone(),
            coarse_label: turn.coarse_label,
        }
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut s = String::new();
    for item in items {
        s.push_str(&serde_json::to_string(item).expect("record serializes"));
        s.push('\n');
    }
    s
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CorpusError> {
    write_file(path, to_jsonl(items).as_bytes())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(bytes).map_err(io)
}

/// Reads and validates a corpus file.
pub fn read_corpus(path: &Path) -> Result<Vec<Dialog>, CorpusError> {
    let dialogs: Vec<Dialog> = read_jsonl(path)?;
    for d in &dialogs {
        d.validate()?;
    }
    Ok(dialogs)
}
