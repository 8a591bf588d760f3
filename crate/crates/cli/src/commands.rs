use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, ValueEnum};
use edutree_core::annotator::{annotate_corpus, AnnotationParams};
use edutree_core::corpus::{read_corpus, write_jsonl, Dialog};
use edutree_core::datagen::{export_dataset, make_dataset, Granularity, IntentSet, SplitSpec, TrainingConfig};
use edutree_core::llm::{ChatBackend, HttpBackend, HttpConfig, ScriptedBackend};
use edutree_core::metrics::{
    consistency_report, evaluate_generation, filter_single_edu, fleiss_kappa, majority_vote,
    pair_annotations, Choice, RougeMode,
};
use edutree_core::segmenter::{segment_corpus, HttpRestorer, PunctuationRestorer, RuleBasedRestorer};
use edutree_core::taxonomy::{
    build_tree, deserialize_tree, expected_depth, serialize_tree, validate_tree, BuildParams,
    LlmSplitOracle, ScriptedSplitOracle, SplitOracle, Taxonomy,
};
use serde_json::{json, Value};

use crate::error::CliError;
use crate::io::{read_hypotheses, read_json, read_references, read_to_string, write_json, write_text};
use crate::manifest::RunManifest;
use crate::render;

/// Result of a successful (possibly partially failed) command.
pub struct Outcome {
    pub manifest: RunManifest,
    pub report: Value,
    pub text: String,
    /// 0, or 2 when some units failed on the backend.
    pub code: u8,
    /// Where the manifest goes unless `--manifest` overrides it.
    pub default_manifest: Option<PathBuf>,
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

#[derive(Debug, Clone, Args)]
pub struct HttpArgs {
    /// Chat-completions endpoint (base URL or full URL).
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long, default_value = "gpt-4o")]
    pub model: String,
    /// Request timeout in seconds.
    #[arg(long, default_value_t = 60)]
    pub timeout: u64,
    #[arg(long, default_value_t = 5)]
    pub max_retries: u32,
    /// Base delay of the exponential backoff, in milliseconds.
    #[arg(long, default_value_t = 1000)]
    pub backoff_ms: u64,
    /// Append request/response records to this JSONL file.
    #[arg(long)]
    pub audit: Option<PathBuf>,
}

impl Default for HttpArgs {
    fn default() -> Self {
        Self {
            endpoint: None,
            model: "gpt-4o".into(),
            timeout: 60,
            max_retries: 5,
            backoff_ms: 1000,
            audit: None,
        }
    }
}

impl HttpArgs {
    fn backend(&self) -> Result<HttpBackend, CliError> {
        let endpoint = self
            .endpoint
            .clone()
            .ok_or_else(|| CliError::invalid("--endpoint is required for the http backend"))?;
        let mut cfg = HttpConfig::new(endpoint, self.model.clone());
        cfg.timeout = Duration::from_secs(self.timeout);
        cfg.max_retries = self.max_retries;
        cfg.backoff_base = Duration::from_millis(self.backoff_ms);
        cfg.audit_path = self.audit.clone();
        Ok(HttpBackend::new(cfg)?)
    }

    fn record(&self, m: &mut RunManifest) {
        m.param("endpoint", &self.endpoint)
            .param("model", &self.model)
            .param("timeout_s", self.timeout)
            .param("max_retries", self.max_retries);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    Scripted,
    Http,
}

#[derive(Debug, Clone, Args)]
pub struct BuildTreeArgs {
    /// Taxonomy document (JSON).
    #[arg(long)]
    pub taxonomy: PathBuf,
    /// Intent → relative frequency (JSON object). Uniform when omitted.
    #[arg(long)]
    pub frequencies: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = OracleKind::Scripted)]
    pub oracle: OracleKind,
    /// Split script for the scripted oracle; the bundled reference script when omitted.
    #[arg(long)]
    pub splits: Option<PathBuf>,
    #[command(flatten)]
    pub http: HttpArgs,
    #[arg(long, default_value_t = 5)]
    pub max_candidates: usize,
    #[arg(long, default_value_t = 6)]
    pub max_depth: usize,
    #[arg(long, default_value_t = 50)]
    pub max_backtracks: usize,
    #[arg(long, default_value_t = 0.5)]
    pub balance_weight: f64,
}

pub fn build_tree_cmd(a: &BuildTreeArgs) -> Result<Outcome, CliError> {
    let mut m = RunManifest::start("build-tree");
    let mut taxonomy = Taxonomy::from_json(&read_to_string(&a.taxonomy)?)?;
    m.input(&a.taxonomy)?;
    if let Some(f) = &a.frequencies {
        let freq: BTreeMap<String, f64> = read_json(f)?;
        taxonomy = taxonomy.with_frequencies(freq)?;
        m.input(f)?;
    }
    let params = BuildParams {
        max_candidates: a.max_candidates,
        max_depth: a.max_depth,
        max_backtracks: a.max_backtracks,
        balance_weight: a.balance_weight,
    };
    m.param("oracle", a.oracle).param("build_params", params);

    let tree = match a.oracle {
        OracleKind::Scripted => {
            let oracle = match &a.splits {
                Some(p) => {
                    m.input(p)?;
                    ScriptedSplitOracle::from_json(&read_to_string(p)?)?
                }
                None => ScriptedSplitOracle::mathdial_reference(),
            };
            build(&taxonomy, &oracle, params)?
        }
        OracleKind::Http => {
            a.http.record(&mut m);
            let backend = a.http.backend()?;
            let oracle = LlmSplitOracle::new(&backend, a.http.model.clone());
            build(&taxonomy, &oracle, params)?
        }
    };
    let validation = validate_tree(&tree, &taxonomy);
    if !validation.valid {
        return Err(CliError::invalid(format!(
            "built tree failed validation: {}",
            serde_json::to_string(&validation).expect("report serializes")
        )));
    }
    write_text(&a.out, &serialize_tree(&tree))?;
    m.output(&a.out)?;
    let exp: f64 = expected_depth(&tree, &taxonomy.weights())?;
    let report = json!({
        "validation": validation,
        "depth": tree.depth(),
        "root_branches": tree.root.options().len(),
        "expected_depth": exp,
        "backtracks": tree.metadata.backtracks,
        "oracle_calls": tree.metadata.oracle_calls,
    });
    let text = render::tree(&tree, &validation, exp);
    Ok(Outcome {
        manifest: m,
        report,
        text,
        code: 0,
        default_manifest: Some(sibling(&a.out, ".manifest.json")),
    })
}

fn build<O: SplitOracle + ?Sized>(
    taxonomy: &Taxonomy,
    oracle: &O,
    params: BuildParams,
) -> Result<edutree_core::taxonomy::DecisionTree, CliError> {
    Ok(build_tree(taxonomy, oracle, params)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RestorerChoice {
    External,
    Fallback,
}

#[derive(Debug, Clone, Args)]
pub struct SegmentArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = RestorerChoice::Fallback)]
    pub restorer: RestorerChoice,
    /// Punctuation-restoration service URL (required for `external`).
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long, default_value_t = 4)]
    pub max_inflight: usize,
    /// Also write the segmentation report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

pub fn segment_cmd(a: &SegmentArgs) -> Result<Outcome, CliError> {
    let mut m = RunManifest::start("segment");
    let corpus = read_corpus(&a.input)?;
    m.input(&a.input)?;
    m.param("restorer", a.restorer)
        .param("endpoint", &a.endpoint)
        .param("max_inflight", a.max_inflight);
    let restorer: Box<dyn PunctuationRestorer> = match a.restorer {
        RestorerChoice::Fallback => Box::new(RuleBasedRestorer),
        RestorerChoice::External => Box::new(HttpRestorer::new(
            a.endpoint
                .clone()
                .ok_or_else(|| CliError::invalid("--endpoint is required for --restorer external"))?,
        )),
    };
    let (out, report) = segment_corpus(&corpus, restorer.as_ref(), a.max_inflight);
    write_jsonl(&a.out, &out)?;
    m.output(&a.out)?;
    if let Some(p) = &a.report {
        write_json(p, &report)?;
        m.output(p)?;
    }
    for e in &report.errors {
        log::error!("{} turn {}: {}", e.dialog_id, e.turn_index, e.message);
    }
    let code = if report.errors.is_empty() { 0 } else { 2 };
    Ok(Outcome {
        manifest: m,
        text: render::segmentation(&report),
        report: serde_json::to_value(&report).expect("report serializes"),
        code,
        default_manifest: Some(sibling(&a.out, ".manifest.json")),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    Http,
    Mock,
}

#[derive(Debug, Clone, Args)]
pub struct AnnotateArgs {
    /// Segmented corpus.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub tree: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub backend: BackendChoice,
    /// Mock backend script (JSON).
    #[arg(long)]
    pub script: Option<PathBuf>,
    #[command(flatten)]
    pub http: HttpArgs,
    #[arg(long, default_value_t = 4)]
    pub max_inflight: usize,
    #[arg(long, default_value_t = 5)]
    pub context_window: usize,
    /// Re-asks per tree node after an unparseable reply.
    #[arg(long, default_value_t = 3)]
    pub retries: usize,
    /// Per-EDU failure log; defaults to `<out>.errors.jsonl` when failures occur.
    #[arg(long)]
    pub errors: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

pub fn annotate_cmd(a: &AnnotateArgs) -> Result<Outcome, CliError> {
    let mut m = RunManifest::start("annotate");
    let corpus = read_corpus(&a.input)?;
    m.input(&a.input)?;
    let tree = deserialize_tree(&read_to_string(&a.tree)?)?;
    m.input(&a.tree)?;
    let unsegmented: Vec<String> = corpus
        .iter()
        .flat_map(|d| {
            d.teacher_turns()
                .filter(|(_, t)| t.edus.is_none())
                .map(move |(i, _)| format!("{} turn {i}", d.id))
        })
        .collect();
    if !unsegmented.is_empty() {
        log::warn!("{} teacher turns are not segmented and will be skipped", unsegmented.len());
    }
    let backend: Box<dyn ChatBackend> = match a.backend {
        BackendChoice::Mock => {
            let p = a
                .script
                .as_ref()
                .ok_or_else(|| CliError::invalid("--script is required for the mock backend"))?;
            m.input(p)?;
            Box::new(ScriptedBackend::from_json(&read_to_string(p)?)?)
        }
        BackendChoice::Http => {
            a.http.record(&mut m);
            Box::new(a.http.backend()?)
        }
    };
    let params = AnnotationParams {
        context_window: a.context_window,
        retries: a.retries,
        model: a.http.model.clone(),
        max_inflight: a.max_inflight,
        ..AnnotationParams::default()
    };
    m.param("backend", a.backend).param("annotation", &params);
    let (out, report) = annotate_corpus(&corpus, &tree, backend.as_ref(), &params)
        .map_err(CliError::invalid)?;
    write_jsonl(&a.out, &out)?;
    m.output(&a.out)?;
    if !report.errors.is_empty() {
        let path = a.errors.clone().unwrap_or_else(|| sibling(&a.out, ".errors.jsonl"));
        write_jsonl(&path, &report.errors)?;
        m.output(&path)?;
        log::error!(
            "{} of {} EDUs failed ({} backend); see {}",
            report.failures,
            report.total_edus,
            report.backend_failures,
            path.display()
        );
    }
    if let Some(p) = &a.report {
        write_json(p, &report)?;
        m.output(p)?;
    }
    let code = if report.backend_failures > 0 { 2 } else { 0 };
    Ok(Outcome {
        manifest: m,
        text: render::annotation(&report),
        report: serde_json::to_value(&report).expect("report serializes"),
        code,
        default_manifest: Some(sibling(&a.out, ".manifest.json")),
    })
}

#[derive(Debug, Clone, Args)]
pub struct EvalAnnotationArgs {
    /// Corpus carrying the original coarse turn labels.
    #[arg(long)]
    pub gold: PathBuf,
    /// Annotated corpus.
    #[arg(long)]
    pub pred: PathBuf,
    /// Score only turns that segmentation left as a single EDU.
    #[arg(long)]
    pub single_edu_only: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn evaluate_annotation_cmd(a: &EvalAnnotationArgs) -> Result<Outcome, CliError> {
    let mut m = RunManifest::start("evaluate-annotation");
    let gold = read_corpus(&a.gold)?;
    let pred = read_corpus(&a.pred)?;
    m.input(&a.gold)?.input(&a.pred)?;
    m.param("single_edu_only", a.single_edu_only);
    let (value, text) = consistency(&gold, &pred, a.single_edu_only)?;
    if let Some(p) = &a.out {
        write_json(p, &value)?;
        m.output(p)?;
    }
    Ok(Outcome {
        manifest: m,
        report: value,
        text,
        code: 0,
        default_manifest: a.out.as_ref().map(|p| sibling(p, ".manifest.json")),
    })
}

pub(crate) fn consistency(gold: &[Dialog], pred: &[Dialog], single: bool) -> Result<(Value, String), CliError> {
    let (mut items, unmatched) = pair_annotations(gold, pred);
    let total = items.len();
    if single {
        let seg = edutree_core::segmenter::SegmentationReport::from_corpus(pred);
        items = filter_single_edu(&items, &seg);
    }
    let report = consistency_report::<f64>(&items)?;
    let text = render::classification(&report, single, total);
    let value = json!({
        "subset": if single { "single_edu" } else { "all" },
        "paired_items": total,
        "unmatched": unmatched,
        "report": report,
    });
    Ok((value, text))
}

#[derive(Debug, Clone, Args)]
pub struct MakeDatasetArgs {
    /// Annotated corpus.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub split_seed: u64,
    #[arg(long, value_enum, default_value_t = GranularityArg::Edu)]
    pub granularity: GranularityArg,
    #[arg(long, value_enum, default_value_t = IntentsArg::Fine)]
    pub intents: IntentsArg,
    #[arg(long, default_value_t = 500)]
    pub train: usize,
    #[arg(long, default_value_t = 100)]
    pub validation: usize,
    #[arg(long, default_value_t = 100)]
    pub test: usize,
    /// Training configuration (JSON) overriding the defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GranularityArg {
    Edu,
    Turn,
}

impl From<GranularityArg> for Granularity {
    fn from(g: GranularityArg) -> Self {
        match g {
            GranularityArg::Edu => Granularity::Edu,
            GranularityArg::Turn => Granularity::Turn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IntentsArg {
    Fine,
    Coarse,
}

impl From<IntentsArg> for IntentSet {
    fn from(i: IntentsArg) -> Self {
        match i {
            IntentsArg::Fine => IntentSet::Fine,
            IntentsArg::Coarse => IntentSet::Coarse,
        }
    }
}

pub fn make_dataset_cmd(a: &MakeDatasetArgs) -> Result<Outcome, CliError> {
    let mut m = RunManifest::start("make-dataset");
    let corpus = read_corpus(&a.input)?;
    m.input(&a.input)?;
    let config: TrainingConfig = match &a.config {
        Some(p) => {
            m.input(p)?;
            read_json(p)?
        }
        None => TrainingConfig::default(),
    };
    let spec = SplitSpec {
        train: a.train,
        validation: a.validation,
        test: a.test,
        seed: a.split_seed,
    };
    let (granularity, intents) = (Granularity::from(a.granularity), IntentSet::from(a.intents));
    m.param("split", &spec)
        .param("granularity", granularity)
        .param("intents", intents);
    let build = make_dataset(&corpus, &spec, granularity, intents)?;
    for w in &build.warnings {
        log::warn!("{w}");
    }
    let manifest = export_dataset(&build.records, &config, granularity, intents, &a.out)?;
    for name in manifest.files.keys() {
        m.output(&a.out.join(name))?;
    }
    m.output(&a.out.join(edutree_core::datagen::MANIFEST_FILE))?;
    let ids: BTreeMap<String, &Vec<String>> = build
        .dialog_ids
        .iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    let text = render::dataset(&manifest, &build.dialog_ids);
    let report = json!({
        "dataset": manifest,
        "dialogs": ids,
        "warnings": build.warnings,
    });
    Ok(Outcome {
        manifest: m,
        report,
        text,
        code: 0,
        default_manifest: Some(a.out.join("run_manifest.json")),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RougeArg {
    F1,
    Recall,
}

#[derive(Debug, Clone, Args)]
pub struct EvalGenerationArgs {
    /// Hypotheses: plain text lines or JSON lines.
    #[arg(long)]
    pub hyp: PathBuf,
    /// References: plain text lines or JSON lines (`target` field).
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long, value_enum, default_value_t = RougeArg::F1)]
    pub rouge: RougeArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn evaluate_generation_cmd(a: &EvalGenerationArgs) -> Result<Outcome, CliError> {
    let mut m = RunManifest::start("evaluate-generation");
    let hyps = read_hypotheses(&a.hyp)?;
    let refs = read_references(&a.reference)?;
    m.input(&a.hyp)?.input(&a.reference)?;
    let mode = match a.rouge {
        RougeArg::F1 => RougeMode::F1,
        RougeArg::Recall => RougeMode::Recall,
    };
    m.param("rouge", mode);
    let h: Vec<&str> = hyps.iter().map(String::as_str).collect();
    let r: Vec<&str> = refs.iter().map(String::as_str).collect();
    let scores = evaluate_generation::<f64>(&h, &r, mode)?;
    if let Some(p) = &a.out {
        write_json(p, &scores)?;
        m.output(p)?;
    }
    Ok(Outcome {
        manifest: m,
        text: render::generation(&scores),
        report: serde_json::to_value(&scores).expect("scores serialize"),
        code: 0,
        default_manifest: a.out.as_ref().map(|p| sibling(p, ".manifest.json")),
    })
}

#[derive(Debug, Clone, Args)]
pub struct KappaArgs {
    /// JSON array with one entry per item: either category counts
    /// (`[2, 1, 0]`) or the raters' labels (`["A", "A", "both-good"]`).
    #[arg(long)]
    pub ratings: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn kappa_cmd(a: &KappaArgs) -> Result<Outcome, CliError> {
    let mut m = RunManifest::start("kappa");
    let doc: Value = read_json(&a.ratings)?;
    m.input(&a.ratings)?;
    let rows = doc
        .as_array()
        .ok_or_else(|| CliError::invalid("ratings must be a JSON array of items"))?;
    let (categories, counts, votes) = if rows.iter().all(|r| r.as_array().is_some_and(|x| x.iter().all(Value::is_u64))) {
        let counts: Vec<Vec<usize>> = rows
            .iter()
            .map(|r| r.as_array().expect("checked").iter().map(|v| v.as_u64().expect("checked") as usize).collect())
            .collect();
        let k = counts.first().map_or(0, Vec::len);
        ((0..k).map(|j| j.to_string()).collect::<Vec<_>>(), counts, None)
    } else {
        let labels: Vec<Vec<String>> = serde_json::from_value(doc.clone())
            .map_err(|_| CliError::invalid("ratings items must be arrays of counts or of label strings"))?;
        let choices: Option<Vec<Vec<Choice>>> = labels
            .iter()
            .map(|item| {
                item.iter()
                    .map(|l| serde_json::from_value(Value::String(l.clone())).ok())
                    .collect()
            })
            .collect();
        let categories: Vec<String> = match &choices {
            Some(_) => Choice::ALL
                .iter()
                .map(|c| serde_json::to_value(c).expect("choice serializes").as_str().expect("string").to_string())
                .collect(),
            None => {
                let mut all: Vec<String> = labels.iter().flatten().cloned().collect();
                all.sort();
                all.dedup();
                all
            }
        };
        let counts = labels
            .iter()
            .map(|item| categories.iter().map(|c| item.iter().filter(|l| *l == c).count()).collect())
            .collect();
        (categories, counts, choices)
    };
    let kappa = fleiss_kappa::<f64>(&counts)?;
    let vote = votes.map(|v| majority_vote::<f64>(&v)).transpose()?;
    let report = json!({
        "categories": categories,
        "kappa": kappa,
        "majority_vote": vote,
    });
    if let Some(p) = &a.out {
        write_json(p, &report)?;
        m.output(p)?;
    }
    Ok(Outcome {
        manifest: m,
        text: render::kappa(&kappa, &categories, vote.as_ref()),
        report,
        code: 0,
        default_manifest: a.out.as_ref().map(|p| sibling(p, ".manifest.json")),
    })
}
