use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::commands::{
    annotate_cmd, build_tree_cmd, consistency, evaluate_generation_cmd, make_dataset_cmd,
    segment_cmd, AnnotateArgs, BackendChoice, BuildTreeArgs, EvalGenerationArgs, GranularityArg,
    HttpArgs, IntentsArg, MakeDatasetArgs, OracleKind, Outcome, RestorerChoice, RougeArg,
    SegmentArgs,
};
use crate::error::CliError;
use crate::io::{read_to_string, write_json};
use crate::manifest::RunManifest;

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Pipeline configuration (JSON). Relative paths inside it resolve
    /// against the configuration file's directory.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output_dir` from the configuration.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    pub taxonomy: PathBuf,
    /// Prebuilt tree; built from the taxonomy when absent.
    #[serde(default)]
    pub tree: Option<PathBuf>,
    #[serde(default)]
    pub splits: Option<PathBuf>,
    #[serde(default)]
    pub frequencies: Option<PathBuf>,
    #[serde(default)]
    pub restorer: RestorerConfig,
    pub backend: BackendConfig,
    #[serde(default = "default_inflight")]
    pub max_inflight: usize,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub generation: Option<GenerationConfig>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_inflight() -> usize {
    4
}

fn default_output() -> PathBuf {
    PathBuf::from("pipeline_out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RestorerConfig {
    pub kind: RestorerChoice,
    #[serde(default)]
    pub endpoint: Option<String>,
}

impl Default for RestorerConfig {
    fn default() -> Self {
        Self {
            kind: RestorerChoice::Fallback,
            endpoint: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendChoice,
    #[serde(default)]
    pub script: Option<PathBuf>,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub context_window: Option<usize>,
    #[serde(default)]
    pub retries: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub seed: u64,
    #[serde(default = "default_granularity")]
    pub granularity: String,
}

fn default_granularity() -> String {
    "edu".into()
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            train: 500,
            validation: 100,
            test: 100,
            seed: 42,
            granularity: default_granularity(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    pub hypotheses: PathBuf,
    pub references: PathBuf,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl PipelineConfig {
    fn resolved(mut self, base: &Path) -> Self {
        let r = |p: &Path| resolve(base, p);
        self.corpus = r(&self.corpus);
        self.taxonomy = r(&self.taxonomy);
        self.tree = self.tree.as_deref().map(r);
        self.splits = self.splits.as_deref().map(r);
        self.frequencies = self.frequencies.as_deref().map(r);
        self.backend.script = self.backend.script.as_deref().map(r);
        if let Some(g) = &mut self.generation {
            g.hypotheses = r(&g.hypotheses);
            g.references = r(&g.references);
        }
        self.output_dir = r(&self.output_dir);
        self
    }
}

struct Run {
    manifest: RunManifest,
    report: Map<String, Value>,
    text: String,
    code: u8,
}

impl Run {
    /// Records a stage; returns false when it failed and the run must halt.
    fn stage(&mut self, name: &str, mut o: Outcome) -> bool {
        o.manifest.finish(o.code);
        self.code = o.code;
        self.report.insert(name.into(), o.report);
        self.text.push_str(&format!("== {name}\n{}\n", o.text));
        self.manifest.stages.push(o.manifest);
        o.code == 0
    }

    fn done(mut self, out: &Path) -> Result<Outcome, CliError> {
        let report = Value::Object(self.report);
        let summary = out.join("pipeline_report.json");
        write_json(&summary, &report)?;
        self.manifest.output(&summary)?;
        if self.code != 0 {
            let failed = self.manifest.stages.last().map(|m| m.command.clone()).unwrap_or_default();
            log::error!("pipeline halted after stage `{failed}`");
        }
        Ok(Outcome {
            manifest: self.manifest,
            report: json!({ "output_dir": out.display().to_string(), "stages": report }),
            text: self.text,
            code: self.code,
            default_manifest: Some(out.join("pipeline_manifest.json")),
        })
    }
}

macro_rules! stage {
    ($run:ident, $out:expr, $name:expr, $o:expr) => {
        if !$run.stage($name, $o) {
            return $run.done(&$out);
        }
    };
}

pub fn pipeline_cmd(a: &PipelineArgs) -> Result<Outcome, CliError> {
    let raw = read_to_string(&a.config)?;
    let cfg: PipelineConfig = serde_json::from_str(&raw)
        .map_err(|e| CliError::invalid(format!("{}: {e}", a.config.display())))?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let mut cfg = cfg.resolved(base);
    if let Some(o) = &a.out {
        cfg.output_dir = o.clone();
    }
    let granularity = match cfg.dataset.granularity.as_str() {
        "edu" => GranularityArg::Edu,
        "turn" => GranularityArg::Turn,
        other => return Err(CliError::invalid(format!("unknown dataset granularity `{other}`"))),
    };
    let out = cfg.output_dir.clone();
    let mut manifest = RunManifest::start("pipeline");
    manifest.input(&a.config)?;
    manifest.param("config", &cfg);
    let mut run = Run {
        manifest,
        report: Map::new(),
        text: String::new(),
        code: 0,
    };

    let tree_path = match &cfg.tree {
        Some(p) => p.clone(),
        None => {
            let path = out.join("tree.json");
            let o = build_tree_cmd(&BuildTreeArgs {
                taxonomy: cfg.taxonomy.clone(),
                frequencies: cfg.frequencies.clone(),
                out: path.clone(),
                oracle: OracleKind::Scripted,
                splits: cfg.splits.clone(),
                http: HttpArgs::default(),
                max_candidates: 5,
                max_depth: 6,
                max_backtracks: 50,
                balance_weight: 0.5,
            })?;
            stage!(run, out, "build-tree", o);
            path
        }
    };

    let segmented = out.join("segmented.jsonl");
    let o = segment_cmd(&SegmentArgs {
        input: cfg.corpus.clone(),
        out: segmented.clone(),
        restorer: cfg.restorer.kind,
        endpoint: cfg.restorer.endpoint.clone(),
        max_inflight: cfg.max_inflight,
        report: Some(out.join("segmentation_report.json")),
    })?;
    stage!(run, out, "segment", o);

    let annotated = out.join("annotated.jsonl");
    let b = &cfg.backend;
    let defaults = HttpArgs::default();
    let o = annotate_cmd(&AnnotateArgs {
        input: segmented,
        tree: tree_path,
        out: annotated.clone(),
        backend: b.kind,
        script: b.script.clone(),
        http: HttpArgs {
            endpoint: b.endpoint.clone(),
            model: b.model.clone().unwrap_or(defaults.model.clone()),
            ..defaults
        },
        max_inflight: cfg.max_inflight,
        context_window: b.context_window.unwrap_or(5),
        retries: b.retries.unwrap_or(3),
        errors: None,
        report: Some(out.join("annotation_report.json")),
    })?;
    stage!(run, out, "annotate", o);

    let gold = edutree_core::corpus::read_corpus(&cfg.corpus)?;
    let pred = edutree_core::corpus::read_corpus(&annotated)?;
    for (single, file) in [(false, "consistency_all.json"), (true, "consistency_single_edu.json")] {
        let mut m = RunManifest::start("evaluate-annotation");
        m.input(&cfg.corpus)?.input(&annotated)?;
        m.param("single_edu_only", single);
        let (value, text) = consistency(&gold, &pred, single)?;
        let path = out.join(file);
        write_json(&path, &value)?;
        m.output(&path)?;
        let name = if single { "evaluate-annotation-single-edu" } else { "evaluate-annotation" };
        let o = Outcome {
            manifest: m,
            report: value,
            text,
            code: 0,
            default_manifest: None,
        };
        stage!(run, out, name, o);
    }

    for (intents, dir) in [(IntentsArg::Fine, "fine"), (IntentsArg::Coarse, "coarse")] {
        let o = make_dataset_cmd(&MakeDatasetArgs {
            input: annotated.clone(),
            out: out.join("dataset").join(dir),
            split_seed: cfg.dataset.seed,
            granularity,
            intents,
            train: cfg.dataset.train,
            validation: cfg.dataset.validation,
            test: cfg.dataset.test,
            config: None,
        })?;
        stage!(run, out, &format!("make-dataset-{dir}"), o);
    }

    if let Some(g) = &cfg.generation {
        let o = evaluate_generation_cmd(&EvalGenerationArgs {
            hyp: g.hypotheses.clone(),
            reference: g.references.clone(),
            rouge: RougeArg::F1,
            out: Some(out.join("generation_scores.json")),
        })?;
        stage!(run, out, "evaluate-generation", o);
    }

    run.done(&out)
}
