use std::collections::HashMap;

use super::{check_lengths, MetricError};
use crate::scalar::Scalar;

pub const CHAR_ORDER: usize = 6;
pub const WORD_ORDER: usize = 2;
const BETA: usize = 2;

pub const CHRF_SIGNATURE: &str = "chrF2++|nrefs:1|case:mixed|eff:yes|nc:6|nw:2|space:no";

const PUNCTS: &str = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";

/// Per-order `[hypothesis, reference, matched]` n-gram counts: character
/// orders 1..=6 first, then word orders 1..=2. Hypothesis n-grams of an
/// order the reference lacks are not counted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChrfStats(pub [[usize; 3]; CHAR_ORDER + WORD_ORDER]);

impl Default for ChrfStats {
    fn default() -> Self {
        Self([[0; 3]; CHAR_ORDER + WORD_ORDER])
    }
}

impl ChrfStats {
    fn add(&mut self, other: &ChrfStats) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            for k in 0..3 {
                a[k] += b[k];
            }
        }
    }

    /// F-score from averaged precision and recall over orders that have both
    /// hypothesis and reference n-grams.
    pub fn score<T: Scalar>(&self) -> T {
        let mut p = T::zero();
        let mut r = T::zero();
        let mut effective = 0;
        for &[h, rf, m] in &self.0 {
            if h > 0 && rf > 0 {
                p = p + T::from_count(m) / T::from_count(h);
                r = r + T::from_count(m) / T::from_count(rf);
                effective += 1;
            }
        }
        if effective == 0 {
            return T::zero();
        }
        let e = T::from_count(effective);
        let (p, r) = (p / e, r / e);
        if p + r == T::zero() {
            return T::zero();
        }
        let b2 = T::from_count(BETA * BETA);
        T::hundred() * (T::one() + b2) * p * r / (b2 * p + r)
    }
}

fn words(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    for w in s.split_whitespace() {
        let chars: Vec<char> = w.chars().collect();
        if chars.len() == 1 {
            out.push(w.to_string());
        } else if PUNCTS.contains(chars[chars.len() - 1]) {
            out.push(chars[..chars.len() - 1].iter().collect());
            out.push(chars[chars.len() - 1].to_string());
        } else if PUNCTS.contains(chars[0]) {
            out.push(chars[0].to_string());
            out.push(chars[1..].iter().collect());
        } else {
            out.push(w.to_string());
        }
    }
    out
}

fn count<K: std::hash::Hash + Eq>(items: impl Iterator<Item = K>) -> HashMap<K, usize> {
    let mut m = HashMap::new();
    for k in items {
        *m.entry(k).or_insert(0) += 1;
    }
    m
}

fn match_stats<K: std::hash::Hash + Eq>(h: &HashMap<K, usize>, r: &HashMap<K, usize>) -> [usize; 3] {
    let matched = h
        .iter()
        .map(|(k, c)| r.get(k).map_or(0, |rc| (*c).min(*rc)))
        .sum();
    let hyp_total = if r.is_empty() { 0 } else { h.values().sum() };
    [hyp_total, r.values().sum(), matched]
}

fn char_ngrams(chars: &[char], n: usize) -> HashMap<&[char], usize> {
    count(chars.windows(n))
}

fn word_ngrams(ws: &[String], n: usize) -> HashMap<String, usize> {
    count(ws.windows(n).map(|w| w.join(" ")))
}

/// Sentence-level chrF++ statistics; whitespace is excluded from character
/// n-grams.
pub fn chrf_stats(hypothesis: &str, reference: &str) -> ChrfStats {
    let hc: Vec<char> = hypothesis.chars().filter(|c| !c.is_whitespace()).collect();
    let rc: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    let hw = words(hypothesis);
    let rw = words(reference);
    let mut s = ChrfStats::default();
    for n in 1..=CHAR_ORDER {
        s.0[n - 1] = match_stats(&char_ngrams(&hc, n), &char_ngrams(&rc, n));
    }
    for n in 1..=WORD_ORDER {
        s.0[CHAR_ORDER + n - 1] = match_stats(&word_ngrams(&hw, n), &word_ngrams(&rw, n));
    }
    s
}

/// Corpus chrF++ (β = 2) over summed statistics, on a 0–100 scale.
pub fn chrf_pp<T: Scalar>(hypotheses: &[&str], references: &[&str]) -> Result<T, MetricError> {
    check_lengths(hypotheses.len(), references.len())?;
    let mut total = ChrfStats::default();
    for (h, r) in hypotheses.iter().zip(references) {
        total.add(&chrf_stats(h, r));
    }
    Ok(total.score())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn punctuation_split_rule() {
        assert_eq!(words("(hi) there, ok"), ["(hi", ")", "there", ",", "ok"]);
        assert_eq!(words("'tis ."), ["'", "tis", "."]);
    }

    #[test]
    fn bounds() {
        assert_eq!(chrf_pp::<f64>(&["abc def"], &["abc def"]).unwrap(), 100.0);
        assert_eq!(chrf_pp::<f64>(&["xyz"], &["abc"]).unwrap(), 0.0);
        assert_eq!(chrf_pp::<f64>(&[""], &["abc"]).unwrap(), 0.0);
    }
}
