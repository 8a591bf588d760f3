//! Teacher-move taxonomy: the eleven fine-grained intents, their four parent
//! categories, and the decision tree used to annotate them.

mod builder;
mod tree;

pub use builder::{
    build_tree, score_candidate, BuildParams, CandidateBranch, LlmSplitOracle, OracleError,
    ScriptedSplitOracle, SplitCandidate, SplitOracle,
};
pub use tree::{
    deserialize_tree, expected_depth, serialize_tree, validate_tree, Branch, DecisionNode,
    DecisionTree, TreeError, TreeMetadata, ValidationReport,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TaxonomyError {
    #[error("malformed taxonomy document: {0}")]
    Malformed(String),
    #[error("duplicate intent name `{0}`")]
    DuplicateIntent(String),
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("unknown intent `{0}`")]
    UnknownIntent(String),
    #[error("intent `{intent}` belongs to {expected}, not {found}")]
    CategoryMismatch {
        intent: String,
        expected: Category,
        found: Category,
    },
    #[error("intent `{0}` has no examples")]
    NoExamples(String),
    #[error("taxonomy has no intents")]
    Empty,
    #[error("invalid frequencies: {0}")]
    Frequencies(String),
}

/// Coarse teacher-move category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Focus,
    Probing,
    Telling,
    Generic,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Focus,
        Category::Probing,
        Category::Telling,
        Category::Generic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Focus => "Focus",
            Category::Probing => "Probing",
            Category::Telling => "Telling",
            Category::Generic => "Generic",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = TaxonomyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| TaxonomyError::UnknownCategory(s.to_string()))
    }
}

/// The eleven canonical intents, in table order, with their parent categories.
pub const CANONICAL_INTENTS: [(&str, Category); 11] = [
    ("Seek Strategy", Category::Focus),
    ("Guiding Student Focus", Category::Focus),
    ("Recall Relevant Information", Category::Focus),
    ("Asking for Explanation", Category::Probing),
    ("Seeking Self-Correction", Category::Probing),
    ("Perturbing the Question", Category::Probing),
    ("Seeking World Knowledge", Category::Probing),
    ("Revealing Strategy", Category::Telling),
    ("Revealing Answer", Category::Telling),
    ("Greeting/Farewell", Category::Generic),
    ("General Inquiry", Category::Generic),
];

fn normalize_name(name: &str) -> String {
    name.to_lowercase()
        .replace('-', " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Resolves spelling variants ("seeking self correction") to the canonical name.
pub fn canonical_intent(name: &str) -> Option<&'static str> {
    let wanted = normalize_name(name);
    CANONICAL_INTENTS
        .iter()
        .find(|(n, _)| normalize_name(n) == wanted)
        .map(|(n, _)| *n)
}

/// Parent category of a fine-grained intent.
pub fn map_to_category(intent_name: &str) -> Result<Category, TaxonomyError> {
    let wanted = normalize_name(intent_name);
    CANONICAL_INTENTS
        .iter()
        .find(|(n, _)| normalize_name(n) == wanted)
        .map(|(_, c)| *c)
        .ok_or_else(|| TaxonomyError::UnknownIntent(intent_name.to_string()))
}

/// Maps a fine intent to its category name; category names map to themselves.
pub fn coarsen_label(label: &str) -> Result<Category, TaxonomyError> {
    map_to_category(label).or_else(|_| label.parse::<Category>())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intent {
    pub name: String,
    pub category: Category,
    pub examples: Vec<String>,
}

/// Validated set of intents with optional frequency weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Taxonomy {
    intents: Vec<Intent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frequencies: Option<BTreeMap<String, f64>>,
}

#[derive(Deserialize)]
struct RawIntent {
    name: String,
    category: String,
    #[serde(default)]
    examples: Vec<String>,
}

#[derive(Deserialize)]
struct RawTaxonomy {
    intents: Vec<RawIntent>,
    #[serde(default)]
    frequencies: Option<BTreeMap<String, f64>>,
}

const MATHDIAL_TAXONOMY: &str = include_str!("../../../../data/taxonomy.json");

impl Taxonomy {
    pub fn new(intents: Vec<Intent>) -> Result<Self, TaxonomyError> {
        if intents.is_empty() {
            return Err(TaxonomyError::Empty);
        }
        let mut seen = BTreeSet::new();
        let mut checked = Vec::with_capacity(intents.len());
        for intent in intents {
            let name = canonical_intent(&intent.name)
                .ok_or_else(|| TaxonomyError::UnknownIntent(intent.name.clone()))?;
            let expected = map_to_category(name)?;
            if expected != intent.category {
                return Err(TaxonomyError::CategoryMismatch {
                    intent: name.to_string(),
                    expected,
                    found: intent.category,
                });
            }
            if !seen.insert(name) {
                return Err(TaxonomyError::DuplicateIntent(name.to_string()));
            }
            if intent.examples.iter().all(|e| e.trim().is_empty()) {
                return Err(TaxonomyError::NoExamples(name.to_string()));
            }
            checked.push(Intent {
                name: name.to_string(),
                ..intent
            });
        }
        Ok(Self {
            intents: checked,
            frequencies: None,
        })
    }

    /// Parses and validates a JSON taxonomy document.
    pub fn from_json(doc: &str) -> Result<Self, TaxonomyError> {
        let raw: RawTaxonomy =
            serde_json::from_str(doc).map_err(|e| TaxonomyError::Malformed(e.to_string()))?;
        let intents = raw
            .intents
            .into_iter()
            .map(|r| {
                Ok(Intent {
                    category: r.category.parse()?,
                    name: r.name,
                    examples: r.examples,
                })
            })
            .collect::<Result<Vec<_>, TaxonomyError>>()?;
        let taxonomy = Self::new(intents)?;
        match raw.frequencies {
            Some(freq) => taxonomy.with_frequencies(freq),
            None => Ok(taxonomy),
        }
    }

    /// The eleven-intent tutoring taxonomy with one example utterance per intent.
    pub fn mathdial() -> Self {
        Self::from_json(MATHDIAL_TAXONOMY).expect("bundled taxonomy is valid")
    }

    pub fn with_frequencies(mut self, freq: BTreeMap<String, f64>) -> Result<Self, TaxonomyError> {
        let mut resolved = BTreeMap::new();
        for (name, w) in freq {
            let canon = canonical_intent(&name)
                .filter(|c| self.contains(c))
                .ok_or_else(|| {
                    TaxonomyError::Frequencies(format!("`{name}` is not in the taxonomy"))
                })?;
            if !w.is_finite() || w < 0.0 {
                return Err(TaxonomyError::Frequencies(format!(
                    "weight for `{name}` must be finite and non-negative"
                )));
            }
            resolved.insert(canon.to_string(), w);
        }
        if let Some(missing) = self.intents.iter().find(|i| !resolved.contains_key(&i.name)) {
            return Err(TaxonomyError::Frequencies(format!(
                "missing weight for `{}`",
                missing.name
            )));
        }
        if resolved.values().sum::<f64>() <= 0.0 {
            return Err(TaxonomyError::Frequencies("weights sum to zero".into()));
        }
        self.frequencies = Some(resolved);
        Ok(self)
    }

    pub fn intents(&self) -> &[Intent] {
        &self.intents
    }

    pub fn len(&self) -> usize {
        self.intents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intents.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.intents.iter().any(|i| i.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Intent> {
        self.intents.iter().find(|i| i.name == name)
    }

    pub fn names(&self) -> BTreeSet<&str> {
        self.intents.iter().map(|i| i.name.as_str()).collect()
    }

    pub fn categories(&self) -> BTreeSet<Category> {
        self.intents.iter().map(|i| i.category).collect()
    }

    pub fn frequencies(&self) -> Option<&BTreeMap<String, f64>> {
        self.frequencies.as_ref()
    }

    /// Frequency weights, uniform when none were supplied.
    pub fn weights(&self) -> BTreeMap<String, f64> {
        match &self.frequencies {
            Some(f) => f.clone(),
            None => self.intents.iter().map(|i| (i.name.clone(), 1.0)).collect(),
        }
    }

    /// Stable identity derived from the sorted intent names.
    pub fn identity(&self) -> String {
        let mut hasher = Sha256::new();
        for name in self.names() {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
        }
        hex::encode(&hasher.finalize()[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_taxonomy_has_eleven_intents_in_four_categories() {
        let t = Taxonomy::mathdial();
        assert_eq!(t.len(), 11);
        assert_eq!(t.categories().len(), 4);
    }

    #[test]
    fn category_mapping() {
        assert_eq!(map_to_category("Seek Strategy").unwrap(), Category::Focus);
        assert_eq!(map_to_category("Revealing Answer").unwrap(), Category::Telling);
        assert_eq!(
            map_to_category("Perturbing the Question").unwrap(),
            Category::Probing
        );
        assert_eq!(
            map_to_category("seeking self correction").unwrap(),
            Category::Probing
        );
        assert!(matches!(
            map_to_category("Lecturing"),
            Err(TaxonomyError::UnknownIntent(_))
        ));
    }

    #[test]
    fn single_intent_document_is_valid() {
        let doc = r#"{"intents":[{"name":"Revealing Answer","category":"Telling","examples":["No, he had 5 items."]}]}"#;
        let t = Taxonomy::from_json(doc).unwrap();
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn duplicate_names_rejected() {
        let doc = r#"{"intents":[
            {"name":"Seek Strategy","category":"Focus","examples":["a"]},
            {"name":"Seek Strategy","category":"Focus","examples":["b"]}]}"#;
        assert_eq!(
            Taxonomy::from_json(doc).unwrap_err(),
            TaxonomyError::DuplicateIntent("Seek Strategy".into())
        );
    }

    #[test]
    fn unknown_category_and_malformed() {
        let doc = r#"{"intents":[{"name":"Seek Strategy","category":"Scolding","examples":["a"]}]}"#;
        assert!(matches!(
            Taxonomy::from_json(doc),
            Err(TaxonomyError::UnknownCategory(_))
        ));
        assert!(matches!(
            Taxonomy::from_json("{\"intents\": 3}"),
            Err(TaxonomyError::Malformed(_))
        ));
        let doc = r#"{"intents":[{"name":"Seek Strategy","category":"Focus","examples":[]}]}"#;
        assert!(matches!(
            Taxonomy::from_json(doc),
            Err(TaxonomyError::NoExamples(_))
        ));
        let doc = r#"{"intents":[{"name":"Seek Strategy","category":"Telling","examples":["x"]}]}"#;
        assert!(matches!(
            Taxonomy::from_json(doc),
            Err(TaxonomyError::CategoryMismatch { .. })
        ));
    }

    #[test]
    fn frequencies_must_cover_every_intent() {
        let t = Taxonomy::mathdial();
        let mut freq: BTreeMap<String, f64> =
            t.names().into_iter().map(|n| (n.to_string(), 1.0)).collect();
        assert!(t.clone().with_frequencies(freq.clone()).is_ok());
        freq.remove("General Inquiry");
        assert!(t.clone().with_frequencies(freq.clone()).is_err());
        let zero: BTreeMap<String, f64> =
            t.names().into_iter().map(|n| (n.to_string(), 0.0)).collect();
        assert!(t.with_frequencies(zero).is_err());
    }

    #[test]
    fn coarsen_is_idempotent_on_categories() {
        assert_eq!(coarsen_label("Seek Strategy").unwrap(), Category::Focus);
        assert_eq!(coarsen_label("Focus").unwrap(), Category::Focus);
    }
}
