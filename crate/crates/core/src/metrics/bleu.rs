use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{check_lengths, MetricError};
use crate::scalar::Scalar;

const MAX_ORDER: usize = 4;

pub const BLEU_SIGNATURE: &str = "BLEU|nrefs:1|case:mixed|eff:no|tok:13a|smooth:exp";

/// Log used for zero precisions, matching the reference implementation.
const LOG_ZERO: f64 = -9_999_999_999.0;

fn rules() -> &'static [(Regex, &'static str); 4] {
    static RULES: OnceLock<[(Regex, &'static str); 4]> = OnceLock::new();
    RULES.get_or_init(|| {
        let re = |p: &str| Regex::new(p).expect("static pattern");
        [
            (re(r"([\x7B-\x7E\x5B-\x60\x20-\x26\x28-\x2B\x3A-\x40/])"), " ${1} "),
            (re(r"([^0-9])([.,])"), "${1} ${2} "),
            (re(r"([.,])([^0-9])"), " ${1} ${2}"),
            (re(r"([0-9])(-)"), "${1} ${2} "),
        ]
    })
}

/// The "13a" tokenizer: splits punctuation and symbols off words, keeping
/// periods and commas between digits attached.
pub fn tokenize_13a(line: &str) -> String {
    let mut s = line
        .trim_end()
        .replace("<skipped>", "")
        .replace("-\n", "")
        .replace('\n', " ");
    if s.contains('&') {
        s = s
            .replace("&quot;", "\"")
            .replace("&amp;", "&")
            .replace("&lt;", "<")
            .replace("&gt;", ">");
    }
    let mut s = format!(" {s} ");
    for (re, rep) in rules() {
        s = re.replace_all(&s, *rep).into_owned();
    }
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub correct: [usize; MAX_ORDER],
    pub total: [usize; MAX_ORDER],
    pub sys_len: usize,
    pub ref_len: usize,
}

fn ngrams(tokens: &[&str], n: usize) -> HashMap<Vec<String>, usize> {
    let mut m = HashMap::new();
    for w in tokens.windows(n) {
        *m.entry(w.iter().map(|t| t.to_string()).collect()).or_insert(0) += 1;
    }
    m
}

/// Clipped n-gram counts and lengths for one tokenized pair.
pub fn bleu_stats(hypothesis: &str, reference: &str) -> BleuStats {
    let h = tokenize_13a(hypothesis);
    let r = tokenize_13a(reference);
    let ht: Vec<&str> = h.split(' ').filter(|t| !t.is_empty()).collect();
    let rt: Vec<&str> = r.split(' ').filter(|t| !t.is_empty()).collect();
    let mut s = BleuStats {
        sys_len: ht.len(),
        ref_len: rt.len(),
        ..Default::default()
    };
    for n in 1..=MAX_ORDER {
        let hn = ngrams(&ht, n);
        let rn = ngrams(&rt, n);
        s.total[n - 1] = hn.values().sum();
        s.correct[n - 1] = hn
            .iter()
            .map(|(k, c)| rn.get(k).map_or(0, |rc| (*c).min(*rc)))
            .sum();
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuScore<T> {
    pub score: T,
    /// Per-order precisions, 0–100, after smoothing.
    pub precisions: Vec<T>,
    pub brevity_penalty: T,
    pub sys_len: usize,
    pub ref_len: usize,
    pub signature: String,
}

impl BleuStats {
    fn add(&mut self, o: &BleuStats) {
        for n in 0..MAX_ORDER {
            self.correct[n] += o.correct[n];
            self.total[n] += o.total[n];
        }
        self.sys_len += o.sys_len;
        self.ref_len += o.ref_len;
    }

    /// Corpus BLEU-4 with exponential smoothing of zero-match orders.
    pub fn score<T: Scalar>(&self) -> BleuScore<T> {
        let bp = if self.sys_len >= self.ref_len {
            T::one()
        } else if self.sys_len == 0 {
            T::zero()
        } else {
            (T::one() - T::from_count(self.ref_len) / T::from_count(self.sys_len)).exp()
        };
        let mut precisions = vec![T::zero(); MAX_ORDER];
        let mut out = BleuScore {
            score: T::zero(),
            precisions: precisions.clone(),
            brevity_penalty: bp,
            sys_len: self.sys_len,
            ref_len: self.ref_len,
            signature: BLEU_SIGNATURE.into(),
        };
        if self.correct.iter().all(|&c| c == 0) {
            return out;
        }
        if bp == T::one() && self.total.iter().all(|&t| t > 0) && self.correct == self.total {
            out.precisions = vec![T::hundred(); MAX_ORDER];
            out.score = T::hundred();
            return out;
        }
        let mut smooth = T::one();
        for ((p, &correct), &total) in precisions.iter_mut().zip(&self.correct).zip(&self.total) {
            if total == 0 {
                break;
            }
            *p = if correct == 0 {
                smooth = smooth + smooth;
                T::hundred() / (smooth * T::from_count(total))
            } else {
                T::hundred() * T::from_count(correct) / T::from_count(total)
            };
        }
        let log_sum: T = precisions
            .iter()
            .map(|&p| if p > T::zero() { p.ln() } else { T::from_f64_lossy(LOG_ZERO) })
            .sum();
        out.score = bp * (log_sum / T::from_count(MAX_ORDER)).exp();
        out.precisions = precisions;
        out
    }
}

/// Corpus BLEU over summed statistics, on a 0–100 scale.
pub fn sacre_bleu<T: Scalar>(
    hypotheses: &[&str],
    references: &[&str],
) -> Result<BleuScore<T>, MetricError> {
    check_lengths(hypotheses.len(), references.len())?;
    let mut total = BleuStats::default();
    for (h, r) in hypotheses.iter().zip(references) {
        total.add(&bleu_stats(h, r));
    }
    Ok(total.score())
}
