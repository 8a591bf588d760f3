//! Human-readable summaries for `--format text`.

use std::collections::BTreeMap;
use std::fmt::Write;

use edutree_core::annotator::AnnotationReport;
use edutree_core::corpus::SplitName;
use edutree_core::datagen::DatasetManifest;
use edutree_core::metrics::{ClassificationReport, GenerationScores, KappaReport, VoteSummary};
use edutree_core::segmenter::SegmentationReport;
use edutree_core::taxonomy::{DecisionNode, DecisionTree, ValidationReport};

fn node(out: &mut String, n: &DecisionNode, indent: usize) {
    match n {
        DecisionNode::Leaf { intent } => {
            let _ = writeln!(out, "{:indent$}=> {intent}", "");
        }
        DecisionNode::Question { question, branches } => {
            let _ = writeln!(out, "{:indent$}? {question}", "");
            for b in branches {
                let _ = writeln!(out, "{:w$}[{}]", "", b.answer, w = indent + 2);
                node(out, &b.child, indent + 4);
            }
        }
    }
}

pub fn tree(t: &DecisionTree, v: &ValidationReport, expected: f64) -> String {
    let mut s = String::new();
    node(&mut s, &t.root, 0);
    let _ = writeln!(
        s,
        "\nleaves {}  depth {}..{}  expected depth {:.3}  valid {}",
        v.leaf_count, v.min_depth, v.max_depth, expected, v.valid
    );
    s
}

pub fn segmentation(r: &SegmentationReport) -> String {
    let mut s = format!(
        "teacher turns {}  segmented {}  EDUs {}  unchanged {}  warnings {}  errors {}\n",
        r.teacher_turns,
        r.segmented_turns,
        r.total_edus,
        r.unchanged_turns,
        r.warnings.len(),
        r.errors.len()
    );
    for (split, c) in &r.per_split {
        let _ = writeln!(
            s,
            "  {split:<10} turns {:>6}  EDUs {:>6}  unchanged {:>6}",
            c.teacher_turns, c.edus, c.unchanged_turns
        );
    }
    s
}

pub fn annotation(r: &AnnotationReport) -> String {
    let mut s = format!(
        "EDUs {}  annotated {}  failed {} (backend {})  calls {}  {:.1}s\n",
        r.total_edus,
        r.annotated,
        r.failures,
        r.backend_failures,
        r.backend_calls,
        r.elapsed_ms as f64 / 1000.0
    );
    for (intent, n) in &r.per_intent {
        let _ = writeln!(s, "  {intent:<28} {n:>6}");
    }
    s
}

pub fn classification(r: &ClassificationReport<f64>, single: bool, paired: usize) -> String {
    let mut s = format!(
        "subset {}  items {} of {}\n",
        if single { "single-EDU" } else { "all" },
        r.n_items,
        paired
    );
    let _ = writeln!(s, "  {:<16} {:>9} {:>9} {:>9} {:>8}", "", "precision", "recall", "f1", "support");
    for (label, c) in &r.per_class {
        let _ = writeln!(
            s,
            "  {label:<16} {:>9.4} {:>9.4} {:>9.4} {:>8}",
            c.precision, c.recall, c.f1, c.support
        );
    }
    let _ = writeln!(
        s,
        "  {:<16} {:>9.4} {:>9.4} {:>9.4} {:>8}",
        "weighted", r.weighted_precision, r.weighted_recall, r.weighted_f1, r.n_items
    );
    let _ = writeln!(s, "  macro F1 {:.4}", r.macro_f1);
    let _ = writeln!(s, "confusion (rows gold, columns predicted): {}", r.confusion.labels.join(", "));
    for (label, row) in r.confusion.labels.iter().zip(&r.confusion.counts) {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:>6}")).collect();
        let _ = writeln!(s, "  {label:<16}{}", cells.join(""));
    }
    for w in &r.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s
}

pub fn dataset(m: &DatasetManifest, ids: &BTreeMap<SplitName, Vec<String>>) -> String {
    let mut s = format!("{} records ({})\n", m.total_records, m.template_version);
    for (name, f) in &m.files {
        let _ = writeln!(s, "  {name:<22} {:>7}  {}", f.records, &f.sha256[..16]);
    }
    for (split, v) in ids {
        let _ = writeln!(s, "  {split} dialogs: {}", v.len());
    }
    s
}

pub fn generation(g: &GenerationScores<f64>) -> String {
    format!(
        "pairs {}\n  chrF++     {:.2}\n  sacreBLEU  {:.2}\n  ROUGE-1    {:.2}\n  ROUGE-2    {:.2}\n  ROUGE-L    {:.2}\n",
        g.n_pairs, g.chrf_pp, g.sacre_bleu, g.rouge1, g.rouge2, g.rouge_l
    )
}

pub fn kappa(k: &KappaReport<f64>, categories: &[String], vote: Option<&VoteSummary<f64>>) -> String {
    let mut s = format!(
        "kappa {:.4}  P_o {:.4}  P_e {:.4}  items {}  raters {}{}\n",
        k.kappa,
        k.observed_agreement,
        k.expected_agreement,
        k.n_items,
        k.n_raters,
        if k.degenerate { "  (degenerate)" } else { "" }
    );
    for (c, p) in categories.iter().zip(&k.per_category_marginals) {
        let _ = writeln!(s, "  {c:<12} {p:.4}");
    }
    if let Some(v) = vote {
        let _ = writeln!(
            s,
            "votes: A {}  B {}  both-good {}  both-bad {}  ties {}",
            v.wins_a, v.wins_b, v.both_good, v.both_bad, v.ties
        );
        match v.preference_rate {
            Some(p) => {
                let _ = writeln!(s, "preference for A {:.1}% of {} decided", p * 100.0, v.decided);
            }
            None => s.push_str("preference undefined: every item tied\n"),
        }
    }
    s
}
