//! Intent-conditioned fine-tuning data: corpus splits, prompt/target pairs,
//! the prompt template and the exported dataset files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{to_jsonl, write_file, CorpusError, Dialog, Speaker, SplitName};
use crate::taxonomy::coarsen_label;
use crate::util::sha256_hex;

pub const TEMPLATE_VERSION: &str = "edutree-prompt-v1";

pub const DEFAULT_INSTRUCTION: &str = "You are a math teacher helping a student who made a mistake \
in a word problem. Using the problem, its correct solution, the student's solution and the \
conversation so far, write the teacher's next utterance so that it carries out the given intent.";

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("corpus has {available} dialogs but the split needs {requested}")]
    CorpusTooSmall { requested: usize, available: usize },
    #[error("unknown intent `{0}`")]
    UnknownIntent(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] CorpusError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 500,
            validation: 100,
            test: 100,
            seed: 42,
        }
    }
}

impl SplitSpec {
    pub fn total(&self) -> usize {
        self.train + self.validation + self.test
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<Dialog>,
    pub validation: Vec<Dialog>,
    pub test: Vec<Dialog>,
}

impl Splits {
    pub fn get(&self, name: SplitName) -> &[Dialog] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }
}

/// Seeded sampling without replacement. Each split keeps corpus order and
/// every selected dialog records its split.
pub fn split_dialogs(corpus: &[Dialog], spec: &SplitSpec) -> Result<Splits, DatagenError> {
    if spec.total() > corpus.len() {
        return Err(DatagenError::CorpusTooSmall {
            requested: spec.total(),
            available: corpus.len(),
        });
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let take = |range: std::ops::Range<usize>, name: SplitName| {
        let mut idx = order[range].to_vec();
        idx.sort_unstable();
        idx.into_iter()
            .map(|i| {
                let mut d = corpus[i].clone();
                d.split = Some(name);
                d
            })
            .collect::<Vec<_>>()
    };
    let (a, b) = (spec.train, spec.train + spec.validation);
    Ok(Splits {
        train: take(0..a, SplitName::Train),
        validation: take(a..b, SplitName::Validation),
        test: take(b..spec.total(), SplitName::Test),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    #[default]
    Edu,
    Turn,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntentSet {
    #[default]
    Fine,
    Coarse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryLine {
    pub speaker: Speaker,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EduRef {
    pub turn_index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edu_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub instruction: String,
    pub task: String,
    pub gold_solution: String,
    pub student_solution: String,
    pub history: Vec<HistoryLine>,
    pub intent: String,
    pub target: String,
    pub dialog_id: String,
    pub edu_ref: EduRef,
}

/// Separator between EDU intents when a whole turn is one sample.
pub const INTENT_JOINER: &str = " + ";

/// One record per annotated teacher EDU (or fully annotated teacher turn), in
/// dialog order. Skipped units are reported as warnings.
pub fn build_pairs(dialog: &Dialog, granularity: Granularity) -> (Vec<PromptRecord>, Vec<String>) {
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    let record = |history: Vec<HistoryLine>, intent: String, target: &str, edu_ref: EduRef| PromptRecord {
        instruction: DEFAULT_INSTRUCTION.into(),
        task: dialog.question.clone(),
        gold_solution: dialog.gold_solution.clone(),
        student_solution: dialog.student_solution.clone(),
        history,
        intent,
        target: target.to_string(),
        dialog_id: dialog.id.clone(),
        edu_ref,
    };
    let mut history: Vec<HistoryLine> = Vec::new();
    for (ti, turn) in dialog.turns.iter().enumerate() {
        if turn.speaker == Speaker::Teacher {
            match (&turn.edus, granularity) {
                (None, _) => warnings.push(format!("{}: turn {ti} is not segmented; skipped", dialog.id)),
                (Some(edus), Granularity::Edu) => {
                    let mut local = history.clone();
                    for e in edus {
                        match &e.fine_intent {
                            Some(intent) => records.push(record(
                                local.clone(),
                                intent.clone(),
                                &e.text,
                                EduRef {
                                    turn_index: ti,
                                    edu_index: Some(e.edu_index),
                                },
                            )),
                            None => warnings.push(format!(
                                "{}: turn {ti} EDU {} is not annotated; skipped",
                                dialog.id, e.edu_index
                            )),
                        }
                        local.push(HistoryLine {
                            speaker: Speaker::Teacher,
                            text: e.text.clone(),
                        });
                    }
                }
                (Some(edus), Granularity::Turn) => {
                    let intents: Option<Vec<&str>> =
                        edus.iter().map(|e| e.fine_intent.as_deref()).collect();
                    match intents {
                        Some(list) if !list.is_empty() => {
                            let mut uniq: Vec<&str> = Vec::new();
                            for i in list {
                                if !uniq.contains(&i) {
                                    uniq.push(i);
                                }
                            }
                            records.push(record(
                                history.clone(),
                                uniq.join(INTENT_JOINER),
                                &turn.text,
                                EduRef {
                                    turn_index: ti,
                                    edu_index: None,
                                },
                            ));
                        }
                        _ => warnings.push(format!(
                            "{}: turn {ti} has unannotated EDUs; skipped",
                            dialog.id
                        )),
                    }
                }
            }
        }
        history.push(HistoryLine {
            speaker: turn.speaker,
            text: turn.text.clone(),
        });
    }
    (records, warnings)
}

/// Fine-tuning prompt: labeled sections in a fixed order, ending with the
/// generation cue.
pub fn render_prompt(r: &PromptRecord) -> String {
    let mut s = String::new();
    let mut section = |title: &str, body: &str| {
        let _ = write!(s, "### {title}\n{body}\n\n");
    };
    section("Instruction", &r.instruction);
    section("Math problem", &r.task);
    section("Correct solution", &r.gold_solution);
    section("Student solution", &r.student_solution);
    let history: Vec<String> = r
        .history
        .iter()
        .map(|h| format!("{}: {}", h.speaker, h.text))
        .collect();
    section("Dialog history", &history.join("\n"));
    section("Intent of the next teacher utterance", &r.intent);
    s.push_str("### Next teacher utterance\n");
    s
}

/// Replaces each intent by its category. Categories map to themselves, so
/// applying it twice changes nothing.
pub fn coarse_variant(records: &[PromptRecord]) -> Result<Vec<PromptRecord>, DatagenError> {
    records
        .iter()
        .map(|r| {
            let mut cats: Vec<String> = Vec::new();
            for part in r.intent.split(INTENT_JOINER) {
                let c = coarsen_label(part)
                    .map_err(|_| DatagenError::UnknownIntent(part.to_string()))?
                    .to_string();
                if !cats.contains(&c) {
                    cats.push(c);
                }
            }
            Ok(PromptRecord {
                intent: cats.join(INTENT_JOINER),
                ..r.clone()
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub base_model: String,
    pub max_sequence_length: usize,
    pub lora_r: usize,
    pub lora_alpha: usize,
    pub load_in_4bit: bool,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub gradient_accumulation_steps: usize,
    pub optimizer: String,
    pub lr_scheduler: String,
    pub warmup_ratio: f64,
    pub weight_decay: f64,
    pub eval_every_steps: usize,
    pub eval_metric: String,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            base_model: "unsloth/mistral-7b-instruct-v0.3-bnb-4bit".into(),
            max_sequence_length: 1600,
            lora_r: 32,
            lora_alpha: 32,
            load_in_4bit: true,
            epochs: 1,
            learning_rate: 2e-5,
            batch_size: 8,
            gradient_accumulation_steps: 4,
            optimizer: "adamw".into(),
            lr_scheduler: "linear".into(),
            warmup_ratio: 0.1,
            weight_decay: 0.1,
            eval_every_steps: 50,
            eval_metric: "sacrebleu".into(),
            seed: 42,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), DatagenError> {
        let bad = |m: &str| Err(DatagenError::InvalidConfig(m.into()));
        let counts = [
            ("max_sequence_length", self.max_sequence_length),
            ("lora_r", self.lora_r),
            ("lora_alpha", self.lora_alpha),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("gradient_accumulation_steps", self.gradient_accumulation_steps),
            ("eval_every_steps", self.eval_every_steps),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return bad(&format!("{name} must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        for (name, v) in [("warmup_ratio", self.warmup_ratio), ("weight_decay", self.weight_decay)] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(&format!("{name} must lie in (0, 1]"));
            }
        }
        if self.base_model.trim().is_empty() {
            return bad("base_model is empty");
        }
        Ok(())
    }
}

/// One line of an exported split file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportRecord {
    pub prompt: String,
    pub target: String,
    pub intent: String,
    pub dialog_id: String,
    pub edu_ref: EduRef,
    pub prompt_chars: usize,
}

impl From<&PromptRecord> for ExportRecord {
    fn from(r: &PromptRecord) -> Self {
        let prompt = render_prompt(r);
        Self {
            prompt_chars: prompt.chars().count(),
            prompt,
            target: r.target.clone(),
            intent: r.intent.clone(),
            dialog_id: r.dialog_id.clone(),
            edu_ref: r.edu_ref.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub records: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub template_version: String,
    pub granularity: Granularity,
    pub intents: IntentSet,
    pub files: BTreeMap<String, FileEntry>,
    pub total_records: usize,
}

pub const CONFIG_FILE: &str = "training_config.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes `{train,validation,test}.jsonl`, the training config and a
/// manifest of counts and hashes into `dest`.
pub fn export_dataset(
    records: &BTreeMap<SplitName, Vec<PromptRecord>>,
    config: &TrainingConfig,
    granularity: Granularity,
    intents: IntentSet,
    dest: &Path,
) -> Result<DatasetManifest, DatagenError> {
    config.validate()?;
    let mut files = BTreeMap::new();
    let mut total = 0;
    for split in SplitName::ALL {
        let rows: Vec<ExportRecord> = records
            .get(&split)
            .map(|v| v.iter().map(ExportRecord::from).collect())
            .unwrap_or_default();
        let body = to_jsonl(&rows);
        let name = format!("{split}.jsonl");
        write_file(&dest.join(&name), body.as_bytes())?;
        total += rows.len();
        files.insert(
            name,
            FileEntry {
                records: rows.len(),
                sha256: sha256_hex(body.as_bytes()),
            },
        );
    }
    let cfg = serde_json::to_string_pretty(config).expect("config serializes") + "\n";
    write_file(&dest.join(CONFIG_FILE), cfg.as_bytes())?;
    files.insert(
        CONFIG_FILE.into(),
        FileEntry {
            records: 1,
            sha256: sha256_hex(cfg.as_bytes()),
        },
    );
    let manifest = DatasetManifest {
        template_version: TEMPLATE_VERSION.into(),
        granularity,
        intents,
        files,
        total_records: total,
    };
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_file(&dest.join(MANIFEST_FILE), body.as_bytes())?;
    Ok(manifest)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetBuild {
    pub records: BTreeMap<SplitName, Vec<PromptRecord>>,
    /// Dialog ids per split, in corpus order.
    pub dialog_ids: BTreeMap<SplitName, Vec<String>>,
    pub warnings: Vec<String>,
}

/// Splits the corpus and builds records for every split, optionally with
/// coarse intents.
pub fn make_dataset(
    corpus: &[Dialog],
    spec: &SplitSpec,
    granularity: Granularity,
    intents: IntentSet,
) -> Result<DatasetBuild, DatagenError> {
    let splits = split_dialogs(corpus, spec)?;
    let mut out = DatasetBuild::default();
    for name in SplitName::ALL {
        let mut recs = Vec::new();
        for d in splits.get(name) {
            let (r, w) = build_pairs(d, granularity);
            recs.extend(r);
            out.warnings.extend(w);
        }
        if intents == IntentSet::Coarse {
            recs = coarse_variant(&recs)?;
        }
        out.records.insert(name, recs);
        out.dialog_ids
            .insert(name, splits.get(name).iter().map(|d| d.id.clone()).collect());
    }
    Ok(out)
}
