use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{check_lengths, MetricError};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RougeVariant {
    R1,
    R2,
    RL,
}

/// Which component the corpus score averages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RougeMode {
    #[default]
    F1,
    Recall,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScore<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

impl<T: Scalar> RougeScore<T> {
    fn from_counts(overlap: usize, hyp: usize, reference: usize) -> Self {
        let precision = T::from_count(overlap) / T::from_count(hyp.max(1));
        let recall = T::from_count(overlap) / T::from_count(reference.max(1));
        let f1 = if precision + recall > T::zero() {
            let two = T::one() + T::one();
            two * precision * recall / (precision + recall)
        } else {
            T::zero()
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

/// Lowercases and keeps runs of ASCII letters and digits as tokens.
pub fn rouge_tokenize(text: &str) -> Vec<String> {
    static NON_ALNUM: OnceLock<Regex> = OnceLock::new();
    let re = NON_ALNUM.get_or_init(|| Regex::new("[^a-z0-9]+").expect("static pattern"));
    re.replace_all(&text.to_lowercase(), " ")
        .split_whitespace()
        .map(String::from)
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    for w in tokens.windows(n) {
        *m.entry(w).or_insert(0) += 1;
    }
    m
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    for x in a {
        let mut cur = vec![0usize; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        prev = cur;
    }
    prev[b.len()]
}

pub fn rouge<T: Scalar>(hypothesis: &str, reference: &str, variant: RougeVariant) -> RougeScore<T> {
    let h = rouge_tokenize(hypothesis);
    let r = rouge_tokenize(reference);
    match variant {
        RougeVariant::R1 | RougeVariant::R2 => {
            let n = if variant == RougeVariant::R1 { 1 } else { 2 };
            let hc = ngram_counts(&h, n);
            let rc = ngram_counts(&r, n);
            let overlap = hc
                .iter()
                .map(|(k, c)| rc.get(k).map_or(0, |x| (*c).min(*x)))
                .sum();
            RougeScore::from_counts(overlap, hc.values().sum(), rc.values().sum())
        }
        RougeVariant::RL => {
            if h.is_empty() || r.is_empty() {
                return RougeScore::from_counts(0, 0, 0);
            }
            RougeScore::from_counts(lcs_len(&h, &r), h.len(), r.len())
        }
    }
}

/// Mean per-pair F1 (or recall) × 100.
pub fn rouge_corpus<T: Scalar>(
    hypotheses: &[&str],
    references: &[&str],
    variant: RougeVariant,
    mode: RougeMode,
) -> Result<T, MetricError> {
    check_lengths(hypotheses.len(), references.len())?;
    let total: T = hypotheses
        .iter()
        .zip(references)
        .map(|(h, r)| {
            let s = rouge::<T>(h, r, variant);
            match mode {
                RougeMode::F1 => s.f1,
                RougeMode::Recall => s.recall,
            }
        })
        .sum();
    Ok(T::hundred() * total / T::from_count(hypotheses.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cat_sat_example() {
        for v in [RougeVariant::R1, RougeVariant::RL] {
            let s = rouge::<f64>("the cat sat", "the cat", v);
            assert!((s.precision - 2.0 / 3.0).abs() < 1e-12);
            assert_eq!(s.recall, 1.0);
            assert!((s.f1 - 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_is_zero() {
        let s = rouge::<f64>("", "abc", RougeVariant::RL);
        assert_eq!(s.f1, 0.0);
        assert_eq!(rouge::<f64>("", "", RougeVariant::R1).f1, 0.0);
    }

    #[test]
    fn tokenizer() {
        assert_eq!(rouge_tokenize("It's 3.5, OK?"), ["it", "s", "3", "5", "ok"]);
    }
}
