//! Decision-tree construction: candidate splits are requested from an oracle,
//! scored for balance and frequency bias, and explored best-first with
//! backtracking when a subtree cannot be completed.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tree::{DecisionNode, DecisionTree, TreeError, TreeMetadata};
use super::{canonical_intent, Intent, Taxonomy};
use crate::llm::{ChatBackend, ChatMessage, ChatRequest};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("unparseable split proposal after {attempts} attempt(s): {message}")]
    Unparseable { attempts: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildParams {
    /// Candidate splits considered per node.
    pub max_candidates: usize,
    pub max_depth: usize,
    pub max_backtracks: usize,
    /// Weight of the balance term; the frequency-bias term gets `1 - balance_weight`.
    pub balance_weight: f64,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self {
            max_candidates: 5,
            max_depth: 6,
            max_backtracks: 50,
            balance_weight: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateBranch {
    pub answer: String,
    pub intents: Vec<String>,
}

/// A proposed question together with the partition its answers induce.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCandidate {
    pub question: String,
    pub branches: Vec<CandidateBranch>,
}

impl SplitCandidate {
    pub fn new<Q, A, I, S>(question: Q, branches: Vec<(A, I)>) -> Self
    where
        Q: Into<String>,
        A: Into<String>,
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            question: question.into(),
            branches: branches
                .into_iter()
                .map(|(a, is)| CandidateBranch {
                    answer: a.into(),
                    intents: is.into_iter().map(Into::into).collect(),
                })
                .collect(),
        }
    }

    /// A partition of `set` into at least two nonempty, proper, disjoint parts
    /// with distinct answer labels.
    pub fn is_viable(&self, set: &BTreeSet<&str>) -> bool {
        if self.branches.len() < 2 {
            return false;
        }
        let labels: BTreeSet<&str> = self.branches.iter().map(|b| b.answer.as_str()).collect();
        if labels.len() != self.branches.len() || labels.iter().any(|l| l.trim().is_empty()) {
            return false;
        }
        let mut covered = BTreeSet::new();
        for b in &self.branches {
            if b.intents.is_empty() || b.intents.len() >= set.len() {
                return false;
            }
            for i in &b.intents {
                if !set.contains(i.as_str()) || !covered.insert(i.as_str()) {
                    return false;
                }
            }
        }
        covered.len() == set.len()
    }
}

/// Source of candidate splits for a set of intents.
pub trait SplitOracle {
    fn propose(
        &self,
        intents: &[&Intent],
        weights: &BTreeMap<String, f64>,
        max_candidates: usize,
    ) -> Result<Vec<SplitCandidate>, OracleError>;
}

/// Score in [0, 1]: `w * balance + (1 - w) * frequency_bias`.
///
/// Balance is the normalized entropy of the part sizes. Frequency bias is
/// `1 - (E - 1) / log2 |S|`, where `E` is the weighted mean of
/// `1 + log2 |part(i)|` (with `log2 1 = 0`), an estimate of each intent's
/// final depth below this node.
pub fn score_candidate(
    candidate: &SplitCandidate,
    weights: &BTreeMap<String, f64>,
    balance_weight: f64,
) -> f64 {
    let sizes: Vec<usize> = candidate.branches.iter().map(|b| b.intents.len()).collect();
    let total: usize = sizes.iter().sum();
    let m = sizes.len();
    if total < 2 || m < 2 {
        return 0.0;
    }
    let entropy: f64 = sizes
        .iter()
        .filter(|&&s| s > 0)
        .map(|&s| {
            let p = s as f64 / total as f64;
            -p * p.ln()
        })
        .sum();
    let balance = entropy / (m as f64).ln();

    let mut wsum: f64 = candidate
        .branches
        .iter()
        .flat_map(|b| &b.intents)
        .map(|i| weights.get(i).copied().unwrap_or(0.0))
        .sum();
    let uniform = wsum <= 0.0;
    if uniform {
        wsum = total as f64;
    }
    let mut est = 0.0;
    for b in &candidate.branches {
        let below = if b.intents.len() > 1 {
            (b.intents.len() as f64).log2()
        } else {
            0.0
        };
        for i in &b.intents {
            let w = if uniform {
                1.0
            } else {
                weights.get(i).copied().unwrap_or(0.0)
            };
            est += w * (1.0 + below);
        }
    }
    let expected = est / wsum;
    let freq_bias = 1.0 - (expected - 1.0) / (total as f64).log2();
    balance_weight * balance + (1.0 - balance_weight) * freq_bias
}

struct Search<'a, O: ?Sized> {
    oracle: &'a O,
    taxonomy: &'a Taxonomy,
    weights: BTreeMap<String, f64>,
    params: BuildParams,
    backtracks: usize,
    oracle_calls: usize,
}

impl<O: SplitOracle + ?Sized> Search<'_, O> {
    fn recoverable(e: &TreeError) -> bool {
        matches!(e, TreeError::NoViableTree(_) | TreeError::DepthCap(_))
    }

    fn ranked(&self, set: &BTreeSet<&str>, mut candidates: Vec<SplitCandidate>) -> Vec<SplitCandidate> {
        candidates.truncate(self.params.max_candidates);
        let mut scored: Vec<(f64, SplitCandidate)> = candidates
            .into_iter()
            .filter(|c| c.is_viable(set))
            .map(|c| (score_candidate(&c, &self.weights, self.params.balance_weight), c))
            .collect();
        scored.sort_by(|(sa, ca), (sb, cb)| {
            sb.partial_cmp(sa)
                .unwrap_or(Ordering::Equal)
                .then_with(|| ca.question.cmp(&cb.question))
        });
        scored.into_iter().map(|(_, c)| c).collect()
    }

    fn node(&mut self, set: &BTreeSet<&str>, depth: usize) -> Result<DecisionNode, TreeError> {
        if set.len() == 1 {
            let only = set.iter().next().expect("one element");
            return Ok(DecisionNode::leaf(*only));
        }
        if depth >= self.params.max_depth {
            return Err(TreeError::DepthCap(self.params.max_depth));
        }
        let intents: Vec<&Intent> = set
            .iter()
            .filter_map(|n| self.taxonomy.get(n))
            .collect();
        let local: BTreeMap<String, f64> = set
            .iter()
            .map(|n| (n.to_string(), self.weights.get(*n).copied().unwrap_or(0.0)))
            .collect();
        self.oracle_calls += 1;
        let proposals = self
            .oracle
            .propose(&intents, &local, self.params.max_candidates)?;
        let ranked = self.ranked(set, proposals);
        if ranked.is_empty() {
            return Err(TreeError::NoViableTree(set.iter().map(|s| s.to_string()).collect()));
        }

        let mut last_err = None;
        for (rank, cand) in ranked.into_iter().enumerate() {
            if rank > 0 {
                self.backtracks += 1;
                if self.backtracks > self.params.max_backtracks {
                    return Err(TreeError::BacktrackBudget(self.params.max_backtracks));
                }
                log::debug!("backtracking to candidate {rank} for {set:?}");
            }
            match self.children(&cand, depth) {
                Ok(branches) => return Ok(DecisionNode::question(cand.question, branches)),
                Err(e) if Self::recoverable(&e) => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last_err.expect("at least one candidate was tried"))
    }

    fn children(
        &mut self,
        cand: &SplitCandidate,
        depth: usize,
    ) -> Result<Vec<(String, DecisionNode)>, TreeError> {
        cand.branches
            .iter()
            .map(|b| {
                let part: BTreeSet<&str> = b.intents.iter().map(String::as_str).collect();
                Ok((b.answer.clone(), self.node(&part, depth + 1)?))
            })
            .collect()
    }
}

/// Builds an annotation tree whose leaves are exactly the taxonomy's intents.
pub fn build_tree<O: SplitOracle + ?Sized>(
    taxonomy: &Taxonomy,
    oracle: &O,
    params: BuildParams,
) -> Result<DecisionTree, TreeError> {
    if taxonomy.is_empty() {
        return Err(TreeError::EmptyTaxonomy);
    }
    let mut search = Search {
        oracle,
        taxonomy,
        weights: taxonomy.weights(),
        params,
        backtracks: 0,
        oracle_calls: 0,
    };
    let all = taxonomy.names();
    let root = search.node(&all, 0)?;
    Ok(DecisionTree {
        root,
        taxonomy_id: taxonomy.identity(),
        metadata: TreeMetadata {
            params: Some(params),
            backtracks: search.backtracks,
            oracle_calls: search.oracle_calls,
            frequencies: taxonomy.frequencies().cloned(),
        },
    })
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct ScriptEntry {
    intents: Vec<String>,
    candidates: Vec<SplitCandidate>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct ScriptDoc {
    splits: Vec<ScriptEntry>,
}

const MATHDIAL_SPLITS: &str = include_str!("../../../../data/mathdial_splits.json");

/// Oracle answering from a fixed table keyed by intent set.
#[derive(Debug, Clone, Default)]
pub struct ScriptedSplitOracle {
    table: BTreeMap<BTreeSet<String>, Vec<SplitCandidate>>,
}

impl ScriptedSplitOracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with<I, S>(mut self, intents: I, candidates: Vec<SplitCandidate>) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.table
            .insert(intents.into_iter().map(Into::into).collect(), candidates);
        self
    }

    /// Reads `{"splits": [{"intents": [...], "candidates": [...]}]}`.
    pub fn from_json(doc: &str) -> Result<Self, TreeError> {
        let parsed: ScriptDoc =
            serde_json::from_str(doc).map_err(|e| TreeError::Malformed(e.to_string()))?;
        Ok(parsed
            .splits
            .into_iter()
            .fold(Self::new(), |acc, e| acc.with(e.intents, e.candidates)))
    }

    /// Splits reproducing the reference tutoring tree: five root groups, depth two.
    pub fn mathdial_reference() -> Self {
        Self::from_json(MATHDIAL_SPLITS).expect("bundled split script is valid")
    }
}

impl SplitOracle for ScriptedSplitOracle {
    fn propose(
        &self,
        intents: &[&Intent],
        _weights: &BTreeMap<String, f64>,
        _max_candidates: usize,
    ) -> Result<Vec<SplitCandidate>, OracleError> {
        let key: BTreeSet<String> = intents.iter().map(|i| i.name.clone()).collect();
        Ok(self.table.get(&key).cloned().unwrap_or_else(|| {
            log::debug!("no scripted split for {key:?}");
            Vec::new()
        }))
    }
}

/// Oracle that asks a chat model to propose splits as JSON.
pub struct LlmSplitOracle<'a> {
    backend: &'a dyn ChatBackend,
    model: String,
    retries: usize,
}

impl<'a> LlmSplitOracle<'a> {
    pub fn new(backend: &'a dyn ChatBackend, model: impl Into<String>) -> Self {
        Self {
            backend,
            model: model.into(),
            retries: 3,
        }
    }

    pub fn with_retries(mut self, retries: usize) -> Self {
        self.retries = retries;
        self
    }

    pub fn prompt(
        intents: &[&Intent],
        weights: &BTreeMap<String, f64>,
        max_candidates: usize,
    ) -> String {
        let total: f64 = weights.values().sum();
        let mut s = String::from("Intents to separate:\n");
        for i in intents {
            let share = match weights.get(&i.name) {
                Some(w) if total > 0.0 => format!("{:.3}", w / total),
                _ => "unknown".to_string(),
            };
            s.push_str(&format!("- {} (relative frequency {share})\n", i.name));
            for ex in &i.examples {
                s.push_str(&format!("    example: {ex}\n"));
            }
        }
        s.push_str(&format!(
            "\nPropose up to {max_candidates} alternative questions, each splitting these intents \
             into two or more groups by its answers. Prefer questions that let frequent intents be \
             identified early. Every intent must appear in exactly one group of each question.\n\
             Reply with only a JSON array: \
             [{{\"question\": \"...\", \"branches\": [{{\"answer\": \"...\", \"intents\": [\"...\"]}}]}}]"
        ));
        s
    }

    fn parse(raw: &str) -> Result<Vec<SplitCandidate>, String> {
        let start = raw.find('[').ok_or("no JSON array in reply")?;
        let end = raw.rfind(']').ok_or("no JSON array in reply")?;
        if end < start {
            return Err("no JSON array in reply".into());
        }
        let mut cands: Vec<SplitCandidate> =
            serde_json::from_str(&raw[start..=end]).map_err(|e| e.to_string())?;
        for c in &mut cands {
            for b in &mut c.branches {
                for i in &mut b.intents {
                    if let Some(canon) = canonical_intent(i) {
                        *i = canon.to_string();
                    }
                }
            }
        }
        Ok(cands)
    }
}

impl SplitOracle for LlmSplitOracle<'_> {
    fn propose(
        &self,
        intents: &[&Intent],
        weights: &BTreeMap<String, f64>,
        max_candidates: usize,
    ) -> Result<Vec<SplitCandidate>, OracleError> {
        let mut request = ChatRequest::new(
            self.model.clone(),
            vec![
                ChatMessage::system(
                    "You design decision trees of natural-language questions for annotating \
                     teacher utterances in tutoring dialogs with pedagogical intents.",
                ),
                ChatMessage::user(Self::prompt(intents, weights, max_candidates)),
            ],
        );
        request.max_tokens = 2048;
        let mut last = String::new();
        for _ in 0..=self.retries {
            let reply = self
                .backend
                .complete(&request)
                .map_err(|e| OracleError::Backend(e.to_string()))?;
            match Self::parse(&reply.content) {
                Ok(c) => return Ok(c),
                Err(e) => last = e,
            }
        }
        Err(OracleError::Unparseable {
            attempts: self.retries + 1,
            message: last,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedBackend;

    fn set<'a>(names: &[&'a str]) -> BTreeSet<&'a str> {
        names.iter().copied().collect()
    }

    #[test]
    fn viability() {
        let s = set(&["Seek Strategy", "Revealing Answer", "General Inquiry"]);
        let ok = SplitCandidate::new(
            "q",
            vec![
                ("a", vec!["Seek Strategy"]),
                ("b", vec!["Revealing Answer", "General Inquiry"]),
            ],
        );
        assert!(ok.is_viable(&s));
        let degenerate = SplitCandidate::new(
            "q",
            vec![
                ("a", vec!["Seek Strategy", "Revealing Answer", "General Inquiry"]),
                ("b", vec![]),
            ],
        );
        assert!(!degenerate.is_viable(&s));
        let overlapping = SplitCandidate::new(
            "q",
            vec![
                ("a", vec!["Seek Strategy", "Revealing Answer"]),
                ("b", vec!["Revealing Answer", "General Inquiry"]),
            ],
        );
        assert!(!overlapping.is_viable(&s));
        let same_labels = SplitCandidate::new(
            "q",
            vec![
                ("a", vec!["Seek Strategy"]),
                ("a", vec!["Revealing Answer", "General Inquiry"]),
            ],
        );
        assert!(!same_labels.is_viable(&s));
        let incomplete = SplitCandidate::new(
            "q",
            vec![("a", vec!["Seek Strategy"]), ("b", vec!["Revealing Answer"])],
        );
        assert!(!incomplete.is_viable(&s));
    }

    #[test]
    fn score_prefers_isolating_frequent_intent() {
        let w = BTreeMap::from([
            ("A".to_string(), 8.0),
            ("B".to_string(), 1.0),
            ("C".to_string(), 1.0),
        ]);
        let iso_a = SplitCandidate::new("x", vec![("y", vec!["A"]), ("n", vec!["B", "C"])]);
        let iso_c = SplitCandidate::new("z", vec![("y", vec!["C"]), ("n", vec!["A", "B"])]);
        assert!(score_candidate(&iso_a, &w, 0.5) > score_candidate(&iso_c, &w, 0.5));
    }

    #[test]
    fn llm_oracle_parses_fenced_json_and_retries() {
        let tax = Taxonomy::mathdial();
        let intents: Vec<&Intent> = tax
            .intents()
            .iter()
            .filter(|i| i.name == "Revealing Strategy" || i.name == "Revealing Answer")
            .collect();
        let backend = ScriptedBackend::queue([
            "I cannot do that",
            "```json\n[{\"question\": \"Method or value?\", \"branches\": [\
             {\"answer\": \"Method\", \"intents\": [\"revealing strategy\"]},\
             {\"answer\": \"Value\", \"intents\": [\"Revealing Answer\"]}]}]\n```",
        ])
        .unwrap();
        let oracle = LlmSplitOracle::new(&backend, "m");
        let c = oracle.propose(&intents, &tax.weights(), 5).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].branches[0].intents, vec!["Revealing Strategy"]);
        assert_eq!(backend.call_count(), 2);
    }

    #[test]
    fn llm_oracle_gives_up() {
        let tax = Taxonomy::mathdial();
        let intents: Vec<&Intent> = tax.intents().iter().collect();
        let backend = ScriptedBackend::queue(["no", "no"]).unwrap();
        let oracle = LlmSplitOracle::new(&backend, "m").with_retries(1);
        assert!(matches!(
            oracle.propose(&intents, &tax.weights(), 5),
            Err(OracleError::Unparseable { attempts: 2, .. })
        ));
    }
}
