use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BuildParams, OracleError, Taxonomy};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("malformed tree document: {0}")]
    Malformed(String),
    #[error("no frequency entry for leaf intent `{0}`")]
    MissingFrequency(String),
    #[error("frequencies of the leaf intents sum to zero")]
    ZeroFrequencies,
    #[error("taxonomy is empty")]
    EmptyTaxonomy,
    #[error("split oracle failed: {0}")]
    Oracle(#[from] OracleError),
    #[error("no viable split for intents {0:?}")]
    NoViableTree(Vec<String>),
    #[error("backtrack budget of {0} exhausted")]
    BacktrackBudget(usize),
    #[error("depth cap {0} exceeded")]
    DepthCap(usize),
}

/// One node of the annotation tree: a question whose answers route to
/// children, or a leaf naming a single intent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DecisionNode {
    Question {
        question: String,
        branches: Vec<Branch>,
    },
    Leaf {
        intent: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub answer: String,
    pub child: DecisionNode,
}

impl DecisionNode {
    pub fn leaf(intent: impl Into<String>) -> Self {
        DecisionNode::Leaf {
            intent: intent.into(),
        }
    }

    pub fn question(question: impl Into<String>, branches: Vec<(String, DecisionNode)>) -> Self {
        DecisionNode::Question {
            question: question.into(),
            branches: branches
                .into_iter()
                .map(|(answer, child)| Branch { answer, child })
                .collect(),
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, DecisionNode::Leaf { .. })
    }

    /// Answer labels of a question node in tree order; empty for leaves.
    pub fn options(&self) -> Vec<&str> {
        match self {
            DecisionNode::Question { branches, .. } => {
                branches.iter().map(|b| b.answer.as_str()).collect()
            }
            DecisionNode::Leaf { .. } => Vec::new(),
        }
    }

    pub fn child(&self, answer: &str) -> Option<&DecisionNode> {
        match self {
            DecisionNode::Question { branches, .. } => {
                branches.iter().find(|b| b.answer == answer).map(|b| &b.child)
            }
            DecisionNode::Leaf { .. } => None,
        }
    }

    /// Every leaf intent with its depth, in left-to-right order.
    pub fn leaves(&self) -> Vec<(&str, usize)> {
        let mut out = Vec::new();
        self.collect_leaves(0, &mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, depth: usize, out: &mut Vec<(&'a str, usize)>) {
        match self {
            DecisionNode::Leaf { intent } => out.push((intent, depth)),
            DecisionNode::Question { branches, .. } => {
                for b in branches {
                    b.child.collect_leaves(depth + 1, out);
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        self.leaves().iter().map(|(_, d)| *d).max().unwrap_or(0)
    }

    /// Follows a sequence of answers from this node, returning the node reached.
    pub fn replay<I, S>(&self, answers: I) -> Option<&DecisionNode>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut node = self;
        for a in answers {
            node = node.child(a.as_ref())?;
        }
        Some(node)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TreeMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<BuildParams>,
    #[serde(default)]
    pub backtracks: usize,
    #[serde(default)]
    pub oracle_calls: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequencies: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub root: DecisionNode,
    pub taxonomy_id: String,
    #[serde(default)]
    pub metadata: TreeMetadata,
}

impl DecisionTree {
    pub fn new(root: DecisionNode, taxonomy: &Taxonomy) -> Self {
        Self {
            root,
            taxonomy_id: taxonomy.identity(),
            metadata: TreeMetadata::default(),
        }
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn leaf_depth(&self, intent: &str) -> Option<usize> {
        self.root
            .leaves()
            .into_iter()
            .find(|(i, _)| *i == intent)
            .map(|(_, d)| d)
    }

    /// Answer sequence leading from the root to the leaf named `intent`.
    pub fn path_to(&self, intent: &str) -> Option<Vec<(String, String)>> {
        fn walk(node: &DecisionNode, intent: &str, acc: &mut Vec<(String, String)>) -> bool {
            match node {
                DecisionNode::Leaf { intent: i } => i == intent,
                DecisionNode::Question { question, branches } => {
                    for b in branches {
                        acc.push((question.clone(), b.answer.clone()));
                        if walk(&b.child, intent, acc) {
                            return true;
                        }
                        acc.pop();
                    }
                    false
                }
            }
        }
        let mut acc = Vec::new();
        walk(&self.root, intent, &mut acc).then_some(acc)
    }
}

/// Structural checks of a tree against a taxonomy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub leaf_count: usize,
    pub min_depth: usize,
    pub max_depth: usize,
    pub bijective: bool,
    pub missing_intents: Vec<String>,
    pub duplicate_leaves: Vec<String>,
    pub unknown_leaves: Vec<String>,
    /// Questions whose answer labels repeat.
    pub duplicate_answer_labels: Vec<String>,
    /// Questions with fewer than two branches.
    pub underfull_questions: Vec<String>,
    pub taxonomy_match: bool,
}

pub fn validate_tree(tree: &DecisionTree, taxonomy: &Taxonomy) -> ValidationReport {
    let leaves = tree.root.leaves();
    let names = taxonomy.names();

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for (intent, _) in &leaves {
        *counts.entry(intent).or_default() += 1;
    }
    let duplicate_leaves: Vec<String> = counts
        .iter()
        .filter(|(_, &c)| c > 1)
        .map(|(n, _)| n.to_string())
        .collect();
    let unknown_leaves: Vec<String> = counts
        .keys()
        .filter(|n| !names.contains(*n))
        .map(|n| n.to_string())
        .collect();
    let missing_intents: Vec<String> = names
        .iter()
        .filter(|n| !counts.contains_key(*n))
        .map(|n| n.to_string())
        .collect();

    let mut duplicate_answer_labels = Vec::new();
    let mut underfull_questions = Vec::new();
    let mut stack = vec![&tree.root];
    while let Some(node) = stack.pop() {
        if let DecisionNode::Question { question, branches } = node {
            if branches.len() < 2 {
                underfull_questions.push(question.clone());
            }
            let labels: BTreeSet<&str> = branches.iter().map(|b| b.answer.as_str()).collect();
            if labels.len() != branches.len() {
                duplicate_answer_labels.push(question.clone());
            }
            stack.extend(branches.iter().map(|b| &b.child));
        }
    }

    let bijective = duplicate_leaves.is_empty()
        && unknown_leaves.is_empty()
        && missing_intents.is_empty()
        && leaves.len() == names.len();
    let taxonomy_match = tree.taxonomy_id == taxonomy.identity();
    ValidationReport {
        valid: bijective && duplicate_answer_labels.is_empty() && underfull_questions.is_empty(),
        leaf_count: leaves.len(),
        min_depth: leaves.iter().map(|(_, d)| *d).min().unwrap_or(0),
        max_depth: leaves.iter().map(|(_, d)| *d).max().unwrap_or(0),
        bijective,
        missing_intents,
        duplicate_leaves,
        unknown_leaves,
        duplicate_answer_labels,
        underfull_questions,
        taxonomy_match,
    }
}

/// Frequency-weighted mean leaf depth.
pub fn expected_depth<T: Scalar>(
    tree: &DecisionTree,
    frequencies: &BTreeMap<String, T>,
) -> Result<T, TreeError> {
    let mut num = T::zero();
    let mut den = T::zero();
    for (intent, depth) in tree.root.leaves() {
        let w = *frequencies
            .get(intent)
            .ok_or_else(|| TreeError::MissingFrequency(intent.to_string()))?;
        num = num + w * T::from_count(depth);
        den = den + w;
    }
    if den <= T::zero() {
        return Err(TreeError::ZeroFrequencies);
    }
    Ok(num / den)
}

pub fn serialize_tree(tree: &DecisionTree) -> String {
    serde_json::to_string_pretty(tree).expect("tree serializes")
}

pub fn deserialize_tree(doc: &str) -> Result<DecisionTree, TreeError> {
    serde_json::from_str(doc).map_err(|e| TreeError::Malformed(e.to_string()))
}
