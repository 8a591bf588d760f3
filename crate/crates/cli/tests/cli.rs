use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn edutree(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edutree"))
        .args(args)
        .env_remove("OPENAI_API_KEY")
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json_stdout(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}", String::from_utf8_lossy(&o.stdout))
    })
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn help_and_usage_errors() {
    let o = edutree(&["--help"]);
    assert_eq!(code(&o), 0);
    let help = String::from_utf8_lossy(&o.stdout);
    for cmd in ["build-tree", "segment", "annotate", "evaluate-annotation", "make-dataset", "evaluate-generation", "kappa", "pipeline"] {
        assert!(help.contains(cmd), "{cmd} missing from help");
    }
    assert_eq!(code(&edutree(&["segment", "--help"])), 0);
    assert_eq!(code(&edutree(&["--version"])), 0);

    for bad in [&[][..], &["frobnicate"][..], &["segment", "--bogus"][..], &["kappa"][..]] {
        let o = edutree(bad);
        assert_eq!(code(&o), 1, "{bad:?}");
        assert!(o.stdout.is_empty());
        assert!(String::from_utf8_lossy(&o.stderr).to_lowercase().contains("usage"));
    }
}

#[test]
fn segment_matches_golden_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("seg.jsonl");
    let report = dir.path().join("seg.report.json");
    let o = edutree(&[
        "segment", "--in", s(&data("mini_corpus.jsonl")), "--out", s(&out),
        "--restorer", "fallback", "--report", s(&report), "--format", "json",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read_to_string(&out).unwrap(),
        std::fs::read_to_string(data("golden/mini_segmented.jsonl")).unwrap()
    );
    let r = json_stdout(&o);
    assert_eq!(r["total_edus"], 27);
    assert_eq!(r["unchanged_turns"], 13);
    assert_eq!(read_json(&report), r);

    let m = read_json(&dir.path().join("seg.jsonl.manifest.json"));
    assert_eq!(m["command"], "segment");
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["parameters"]["restorer"], "fallback");
    assert_eq!(m["outputs"].as_object().unwrap().len(), 2);
    assert_eq!(m["inputs"].as_object().unwrap().values().next().unwrap().as_str().unwrap().len(), 64);
}

#[test]
fn external_restorer_requires_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    let o = edutree(&[
        "segment", "--in", s(&data("mini_corpus.jsonl")), "--out", s(&dir.path().join("x.jsonl")),
        "--restorer", "external",
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = edutree(&["segment", "--in", s(&dir.path().join("nope.jsonl")), "--out", s(&dir.path().join("x"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.jsonl"));
}

#[test]
fn build_tree_reports_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tree.json");
    let o = edutree(&["build-tree", "--taxonomy", s(&data("taxonomy.json")), "--out", s(&out), "--format", "json"]);
    assert_eq!(code(&o), 0);
    let r = json_stdout(&o);
    assert_eq!(r["depth"], 2);
    assert_eq!(r["root_branches"], 5);
    assert_eq!(r["validation"]["leaf_count"], 11);
    assert_eq!(r["validation"]["valid"], true);
    assert_eq!(
        std::fs::read_to_string(&out).unwrap(),
        std::fs::read_to_string(data("mathdial_tree.json")).unwrap()
    );

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"intents": [{"name": "Mind Reading", "category": "Focus"}]}"#).unwrap();
    let o = edutree(&["build-tree", "--taxonomy", s(&bad), "--out", s(&out)]);
    assert_eq!(code(&o), 1);
}

fn segmented(dir: &Path) -> PathBuf {
    let out = dir.join("seg.jsonl");
    assert_eq!(code(&edutree(&["segment", "--in", s(&data("mini_corpus.jsonl")), "--out", s(&out)])), 0);
    out
}

#[test]
fn annotate_with_mock_backend() {
    let dir = tempfile::tempdir().unwrap();
    let seg = segmented(dir.path());
    let out = dir.path().join("ann.jsonl");
    let o = edutree(&[
        "annotate", "--in", s(&seg), "--tree", s(&data("mathdial_tree.json")), "--out", s(&out),
        "--backend", "mock", "--script", s(&data("mini_mock_annotator.json")), "--format", "json",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json_stdout(&o);
    assert_eq!(r["annotated"], 27);
    assert_eq!(r["per_intent"]["Seeking Self-Correction"], 2);
    assert!(!dir.path().join("ann.jsonl.errors.jsonl").exists());

    let o = edutree(&[
        "evaluate-annotation", "--gold", s(&data("mini_corpus.jsonl")), "--pred", s(&out), "--format", "json",
    ]);
    assert_eq!(code(&o), 0);
    let r = json_stdout(&o);
    assert_eq!(r["paired_items"], 27);
    assert_eq!(r["report"]["n_items"], 27);
    let o = edutree(&[
        "evaluate-annotation", "--gold", s(&data("mini_corpus.jsonl")), "--pred", s(&out), "--single-edu-only",
    ]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("items 13 of 27"));
}

#[test]
fn annotate_with_unreachable_endpoint_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let seg = segmented(dir.path());
    let out = dir.path().join("ann.jsonl");
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let endpoint = format!("http://127.0.0.1:{port}/v1");
    let o = edutree(&[
        "annotate", "--in", s(&seg), "--tree", s(&data("mathdial_tree.json")), "--out", s(&out),
        "--backend", "http", "--endpoint", &endpoint, "--max-retries", "0", "--backoff-ms", "1",
        "--timeout", "2",
    ]);
    assert_eq!(code(&o), 2);
    let errors = std::fs::read_to_string(dir.path().join("ann.jsonl.errors.jsonl")).unwrap();
    let lines: Vec<Value> = errors.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 27);
    assert!(lines.iter().all(|l| l["kind"] == "backend"));
    assert!(out.exists());
    let m = read_json(&dir.path().join("ann.jsonl.manifest.json"));
    assert_eq!(m["exit_code"], 2);

    let o = edutree(&[
        "annotate", "--in", s(&seg), "--tree", s(&data("mathdial_tree.json")), "--out", s(&out),
        "--backend", "http",
    ]);
    assert_eq!(code(&o), 1, "missing endpoint is a usage error");
}

#[test]
fn make_dataset_writes_split_files() {
    let dir = tempfile::tempdir().unwrap();
    let seg = segmented(dir.path());
    let ann = dir.path().join("ann.jsonl");
    assert_eq!(
        code(&edutree(&[
            "annotate", "--in", s(&seg), "--tree", s(&data("mathdial_tree.json")), "--out", s(&ann),
            "--backend", "mock", "--script", s(&data("mini_mock_annotator.json")),
        ])),
        0
    );
    let out = dir.path().join("ds");
    let args = [
        "make-dataset", "--in", s(&ann), "--out", s(&out), "--train", "3", "--validation", "1",
        "--test", "1", "--split-seed", "42", "--intents", "coarse", "--format", "json",
    ];
    let o = edutree(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json_stdout(&o);
    assert_eq!(r["dataset"]["total_records"], 27);
    assert_eq!(r["dataset"]["intents"], "coarse");
    let first = read_json(&out.join("manifest.json"));
    assert_eq!(code(&edutree(&args)), 0);
    assert_eq!(read_json(&out.join("manifest.json")), first);
    assert!(out.join("training_config.json").exists());

    let o = edutree(&["make-dataset", "--in", s(&ann), "--out", s(&out)]);
    assert_eq!(code(&o), 1, "default 500/100/100 cannot be drawn from 5 dialogs");
}

#[test]
fn evaluate_generation_reads_text_and_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let hyp = dir.path().join("hyp.txt");
    let reference = dir.path().join("ref.jsonl");
    std::fs::write(&hyp, "the cat sat on the mat\nwhat is 10 + 4?\n").unwrap();
    std::fs::write(
        &reference,
        "{\"target\": \"the cat sat on the mat\"}\n{\"target\": \"what do you get for 10 + 4?\"}\n",
    )
    .unwrap();
    let out = dir.path().join("scores.json");
    let o = edutree(&["evaluate-generation", "--hyp", s(&hyp), "--ref", s(&reference), "--out", s(&out), "--format", "json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json_stdout(&o);
    assert_eq!(r["n_pairs"], 2);
    assert_eq!(read_json(&out), r);
    for k in ["chrf_pp", "sacre_bleu", "rouge1", "rouge2", "rougeL"] {
        let v = r[k].as_f64().unwrap();
        assert!(v > 0.0 && v < 100.0, "{k} = {v}");
    }
    assert!(r["bleu_signature"].as_str().unwrap().contains("tok:13a"));

    std::fs::write(&hyp, "only one line\n").unwrap();
    assert_eq!(code(&edutree(&["evaluate-generation", "--hyp", s(&hyp), "--ref", s(&reference)])), 1);
}

#[test]
fn kappa_accepts_counts_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("counts.json");
    std::fs::write(&counts, "[[3,0],[0,3],[2,1],[1,2]]").unwrap();
    let o = edutree(&["kappa", "--ratings", s(&counts), "--format", "json"]);
    assert_eq!(code(&o), 0);
    let r = json_stdout(&o);
    assert!((r["kappa"]["kappa"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert!(r["majority_vote"].is_null());

    let labels = dir.path().join("labels.json");
    std::fs::write(&labels, r#"[["A","A","B"],["B","B","B"],["A","both-good","both-bad"]]"#).unwrap();
    let o = edutree(&["kappa", "--ratings", s(&labels), "--format", "json"]);
    assert_eq!(code(&o), 0);
    let r = json_stdout(&o);
    assert_eq!(r["categories"], serde_json::json!(["A", "B", "both-good", "both-bad"]));
    assert_eq!(r["majority_vote"]["wins_a"], 1);
    assert_eq!(r["majority_vote"]["wins_b"], 1);
    assert_eq!(r["majority_vote"]["ties"], 1);

    let ragged = dir.path().join("ragged.json");
    std::fs::write(&ragged, "[[3,0],[1,1]]").unwrap();
    assert_eq!(code(&edutree(&["kappa", "--ratings", s(&ragged)])), 1);
}

fn output_hashes(m: &Value) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![m];
    while let Some(m) = stack.pop() {
        for (k, v) in m["outputs"].as_object().unwrap() {
            out.insert(k.clone(), v.as_str().unwrap().to_string());
        }
        if let Some(stages) = m["stages"].as_array() {
            stack.extend(stages);
        }
    }
    out
}

#[test]
fn pipeline_runs_end_to_end_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = edutree(&["pipeline", "--config", s(&data("mini_pipeline.json")), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "tree.json", "segmented.jsonl", "annotated.jsonl", "consistency_all.json",
        "consistency_single_edu.json", "pipeline_report.json", "pipeline_manifest.json",
        "dataset/fine/train.jsonl", "dataset/coarse/manifest.json",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let m = read_json(&out.join("pipeline_manifest.json"));
    let stages: Vec<&str> = m["stages"].as_array().unwrap().iter().map(|s| s["command"].as_str().unwrap()).collect();
    assert_eq!(
        stages,
        ["build-tree", "segment", "annotate", "evaluate-annotation", "evaluate-annotation", "make-dataset", "make-dataset"]
    );
    // each stage consumes the previous stage's output by content hash
    let seg_out = &m["stages"][1]["outputs"][s(&out.join("segmented.jsonl"))];
    assert_eq!(&m["stages"][2]["inputs"][s(&out.join("segmented.jsonl"))], seg_out);

    let first = output_hashes(&m);
    let o = edutree(&["pipeline", "--config", s(&data("mini_pipeline.json")), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    assert_eq!(output_hashes(&read_json(&out.join("pipeline_manifest.json"))), first);
}

#[test]
fn pipeline_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("p.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{"corpus": "{}", "backend": {{"kind": "mock", "script": "{}"}}, "output_dir": "out"}}"#,
            s(&data("mini_corpus.jsonl")),
            s(&data("mini_mock_annotator.json"))
        ),
    )
    .unwrap();
    let o = edutree(&["pipeline", "--config", s(&cfg)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("taxonomy"));
}
