//! Evaluation metrics: annotation consistency, reference-based generation
//! scores and human-evaluation agreement.
//!
//! Everything here is pure and generic over the [`Scalar`](crate::scalar::Scalar)
//! type used for the final arithmetic; counting is exact.

mod agreement;
mod bleu;
mod chrf;
mod classification;
mod rouge;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub use agreement::{fleiss_kappa, majority_vote, Choice, KappaReport, Outcome, VoteSummary};
pub use bleu::{bleu_stats, sacre_bleu, tokenize_13a, BleuScore, BLEU_SIGNATURE};
pub use chrf::{chrf_pp, chrf_stats, ChrfStats, CHRF_SIGNATURE};
pub use classification::{
    consistency_report, filter_single_edu, pair_annotations, ClassScores, ClassificationReport,
    ConfusionMatrix, ConsistencyItem,
};
pub use rouge::{rouge, rouge_corpus, rouge_tokenize, RougeMode, RougeScore, RougeVariant};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("{hypotheses} hypotheses but {references} references")]
    LengthMismatch {
        hypotheses: usize,
        references: usize,
    },
    #[error("no items to score")]
    Empty,
    #[error("unknown intent `{0}`")]
    UnknownIntent(String),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("item {item} has {found} ratings, expected {expected}")]
    UnequalRaters {
        item: usize,
        expected: usize,
        found: usize,
    },
    #[error("item {item} has {found} categories, expected {expected}")]
    Ragged {
        item: usize,
        expected: usize,
        found: usize,
    },
    #[error("at least 2 raters per item are required, got {0}")]
    TooFewRaters(usize),
    #[error("kappa is undefined: expected agreement is 1 but observed agreement is {observed}")]
    UndefinedKappa { observed: f64 },
}

pub(crate) fn check_lengths(hyps: usize, refs: usize) -> Result<(), MetricError> {
    if hyps != refs {
        return Err(MetricError::LengthMismatch {
            hypotheses: hyps,
            references: refs,
        });
    }
    if hyps == 0 {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Corpus-level generation scores, each on a 0–100 scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationScores<T> {
    pub chrf_pp: T,
    pub sacre_bleu: T,
    pub rouge1: T,
    pub rouge2: T,
    #[serde(rename = "rougeL")]
    pub rouge_l: T,
    pub n_pairs: usize,
    pub rouge_mode: RougeMode,
    pub chrf_signature: String,
    pub bleu_signature: String,
}

pub fn evaluate_generation<T: Scalar>(
    hypotheses: &[&str],
    references: &[&str],
    rouge_mode: RougeMode,
) -> Result<GenerationScores<T>, MetricError> {
    check_lengths(hypotheses.len(), references.len())?;
    Ok(GenerationScores {
        chrf_pp: chrf_pp(hypotheses, references)?,
        sacre_bleu: sacre_bleu::<T>(hypotheses, references)?.score,
        rouge1: rouge_corpus(hypotheses, references, RougeVariant::R1, rouge_mode)?,
        rouge2: rouge_corpus(hypotheses, references, RougeVariant::R2, rouge_mode)?,
        rouge_l: rouge_corpus(hypotheses, references, RougeVariant::RL, rouge_mode)?,
        n_pairs: hypotheses.len(),
        rouge_mode,
        chrf_signature: CHRF_SIGNATURE.into(),
        bleu_signature: BLEU_SIGNATURE.into(),
    })
}
