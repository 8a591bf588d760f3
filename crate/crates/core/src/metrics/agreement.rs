use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaReport<T> {
    pub kappa: T,
    pub observed_agreement: T,
    pub expected_agreement: T,
    pub n_items: usize,
    pub n_raters: usize,
    pub n_categories: usize,
    pub per_category_marginals: Vec<T>,
    /// Every rating fell in one category; kappa is reported as 1.
    pub degenerate: bool,
}

/// Fleiss' kappa for an items × categories matrix of rating counts.
pub fn fleiss_kappa<T: Scalar>(ratings: &[Vec<usize>]) -> Result<KappaReport<T>, MetricError> {
    let first = ratings.first().ok_or(MetricError::Empty)?;
    let k = first.len();
    if k == 0 {
        return Err(MetricError::Empty);
    }
    let n: usize = first.iter().sum();
    if n < 2 {
        return Err(MetricError::TooFewRaters(n));
    }
    for (item, row) in ratings.iter().enumerate() {
        if row.len() != k {
            return Err(MetricError::Ragged {
                item,
                expected: k,
                found: row.len(),
            });
        }
        let found: usize = row.iter().sum();
        if found != n {
            return Err(MetricError::UnequalRaters {
                item,
                expected: n,
                found,
            });
        }
    }
    let items = ratings.len();
    let nt = T::from_count(n);
    let p_bar = ratings
        .iter()
        .map(|row| {
            let sq: usize = row.iter().map(|c| c * c).sum();
            T::from_count(sq - n) / (nt * (nt - T::one()))
        })
        .sum::<T>()
        / T::from_count(items);
    let column_totals: Vec<usize> = (0..k).map(|j| ratings.iter().map(|r| r[j]).sum()).collect();
    let marginals: Vec<T> = column_totals
        .iter()
        .map(|&c| T::from_count(c) / T::from_count(items * n))
        .collect();
    let p_e: T = marginals.iter().map(|&p| p * p).sum();
    let degenerate = column_totals.contains(&(items * n));
    let kappa = if degenerate {
        T::one()
    } else if T::one() - p_e <= T::zero() {
        return Err(MetricError::UndefinedKappa {
            observed: p_bar.to_f64_lossy(),
        });
    } else {
        (p_bar - p_e) / (T::one() - p_e)
    };
    Ok(KappaReport {
        kappa,
        observed_agreement: p_bar,
        expected_agreement: p_e,
        n_items: items,
        n_raters: n,
        n_categories: k,
        per_category_marginals: marginals,
        degenerate,
    })
}

/// Pairwise-comparison judgement: system A better, system B better, or neither.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
    #[serde(rename = "both-good")]
    BothGood,
    #[serde(rename = "both-bad")]
    BothBad,
}

impl Choice {
    pub const ALL: [Choice; 4] = [Choice::A, Choice::B, Choice::BothGood, Choice::BothBad];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Decided(Choice),
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteSummary<T> {
    pub decisions: Vec<Outcome>,
    pub wins_a: usize,
    pub wins_b: usize,
    pub both_good: usize,
    pub both_bad: usize,
    pub ties: usize,
    pub decided: usize,
    /// `wins_a / decided`; absent when every item tied.
    pub preference_rate: Option<T>,
}

/// Strict-plurality decision per item.
pub fn majority_vote<T: Scalar>(votes: &[Vec<Choice>]) -> Result<VoteSummary<T>, MetricError> {
    if votes.is_empty() || votes.iter().any(Vec::is_empty) {
        return Err(MetricError::Empty);
    }
    let mut s = VoteSummary {
        decisions: Vec::with_capacity(votes.len()),
        wins_a: 0,
        wins_b: 0,
        both_good: 0,
        both_bad: 0,
        ties: 0,
        decided: 0,
        preference_rate: None,
    };
    for item in votes {
        let counts = Choice::ALL.map(|c| item.iter().filter(|&&v| v == c).count());
        let best = *counts.iter().max().expect("four choices");
        let leaders: Vec<Choice> = Choice::ALL
            .into_iter()
            .zip(counts)
            .filter(|&(_, c)| c == best)
            .map(|(ch, _)| ch)
            .collect();
        let outcome = match leaders[..] {
            [winner] => Outcome::Decided(winner),
            _ => Outcome::Tie,
        };
        match outcome {
            Outcome::Decided(Choice::A) => s.wins_a += 1,
            Outcome::Decided(Choice::B) => s.wins_b += 1,
            Outcome::Decided(Choice::BothGood) => s.both_good += 1,
            Outcome::Decided(Choice::BothBad) => s.both_bad += 1,
            Outcome::Tie => s.ties += 1,
        }
        s.decisions.push(outcome);
    }
    s.decided = votes.len() - s.ties;
    if s.decided > 0 {
        s.preference_rate = Some(T::from_count(s.wins_a) / T::from_count(s.decided));
    }
    Ok(s)
}
