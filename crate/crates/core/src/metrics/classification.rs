use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::corpus::Dialog;
use crate::scalar::{f_beta, ratio, Scalar};
use crate::segmenter::SegmentationReport;
use crate::taxonomy::{map_to_category, Category};

/// Square count matrix; rows are gold labels, columns predicted labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let n = labels.len();
        Self {
            labels,
            counts: vec![vec![0; n]; n],
        }
    }

    /// Builds a matrix from `(gold, predicted)` label pairs.
    pub fn from_pairs<'a>(
        labels: Vec<String>,
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self, MetricError> {
        let mut m = Self::new(labels);
        for (g, p) in pairs {
            m.add(g, p)?;
        }
        Ok(m)
    }

    fn index(&self, label: &str) -> Result<usize, MetricError> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| MetricError::UnknownLabel(label.to_string()))
    }

    pub fn add(&mut self, gold: &str, predicted: &str) -> Result<(), MetricError> {
        let (g, p) = (self.index(gold)?, self.index(predicted)?);
        self.counts[g][p] += 1;
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Gold count of label `i`.
    pub fn support(&self, i: usize) -> usize {
        self.counts[i].iter().sum()
    }

    pub fn predicted(&self, i: usize) -> usize {
        self.counts.iter().map(|row| row[i]).sum()
    }

    pub fn is_diagonal(&self) -> bool {
        self.counts
            .iter()
            .enumerate()
            .all(|(i, row)| row.iter().enumerate().all(|(j, &c)| i == j || c == 0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport<T> {
    /// Labels occurring in gold or predictions.
    pub per_class: BTreeMap<String, ClassScores<T>>,
    pub weighted_precision: T,
    pub weighted_recall: T,
    pub weighted_f1: T,
    pub macro_f1: T,
    pub n_items: usize,
    pub confusion: ConfusionMatrix,
    pub warnings: Vec<String>,
}

impl<T: Scalar> ClassificationReport<T> {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Result<Self, MetricError> {
        let total = confusion.total();
        if total == 0 {
            return Err(MetricError::Empty);
        }
        let mut per_class = BTreeMap::new();
        let mut warnings = Vec::new();
        let (mut wp, mut wr, mut wf, mut mf) = (T::zero(), T::zero(), T::zero(), T::zero());
        for (i, label) in confusion.labels.iter().enumerate() {
            let support = confusion.support(i);
            let predicted = confusion.predicted(i);
            if support == 0 && predicted == 0 {
                continue;
            }
            let tp = confusion.counts[i][i];
            if predicted == 0 {
                warnings.push(format!("precision of `{label}` is undefined (never predicted); scored 0"));
            }
            if support == 0 {
                warnings.push(format!("recall of `{label}` is undefined (absent from gold); scored 0"));
            }
            let precision: T = ratio(tp, predicted);
            let recall: T = ratio(tp, support);
            let f1 = f_beta(precision, recall, T::one());
            let w = T::from_count(support);
            wp = wp + w * precision;
            wr = wr + w * recall;
            wf = wf + w * f1;
            mf = mf + f1;
            per_class.insert(
                label.clone(),
                ClassScores {
                    precision,
                    recall,
                    f1,
                    support,
                },
            );
        }
        let n = T::from_count(total);
        let k = T::from_count(per_class.len());
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(Self {
            weighted_precision: wp / n,
            weighted_recall: wr / n,
            weighted_f1: wf / n,
            macro_f1: mf / k,
            per_class,
            n_items: total,
            confusion,
            warnings,
        })
    }
}

/// One annotated EDU paired with the coarse label of its turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyItem {
    pub dialog_id: String,
    pub turn_index: usize,
    pub edu_index: usize,
    pub gold: Category,
    pub predicted: String,
}

/// Maps each predicted fine intent to its category and scores it against the
/// gold category on the 4×4 category matrix.
pub fn consistency_report<T: Scalar>(
    items: &[ConsistencyItem],
) -> Result<ClassificationReport<T>, MetricError> {
    if items.is_empty() {
        return Err(MetricError::Empty);
    }
    let labels = Category::ALL.iter().map(|c| c.to_string()).collect();
    let mut cm = ConfusionMatrix::new(labels);
    for it in items {
        let pred = map_to_category(&it.predicted)
            .map_err(|_| MetricError::UnknownIntent(it.predicted.clone()))?;
        cm.add(it.gold.as_str(), pred.as_str())?;
    }
    ClassificationReport::from_confusion(cm)
}

/// Items whose turn was left as a single EDU by segmentation.
pub fn filter_single_edu(
    items: &[ConsistencyItem],
    report: &SegmentationReport,
) -> Vec<ConsistencyItem> {
    items
        .iter()
        .filter(|it| report.is_unchanged(&it.dialog_id, it.turn_index))
        .cloned()
        .collect()
}

/// Pairs annotated EDUs in `predicted` with the coarse labels of the matching
/// turns in `gold`. Returns the items and the number of annotated EDUs that
/// had no labeled gold turn.
pub fn pair_annotations(gold: &[Dialog], predicted: &[Dialog]) -> (Vec<ConsistencyItem>, usize) {
    let gold_by_id: HashMap<&str, &Dialog> = gold.iter().map(|d| (d.id.as_str(), d)).collect();
    let mut items = Vec::new();
    let mut unmatched = 0;
    for d in predicted {
        for e in d.edus() {
            let Some(pred) = &e.fine_intent else { continue };
            let label = gold_by_id
                .get(d.id.as_str())
                .and_then(|g| g.turns.get(e.turn_index))
                .and_then(|t| t.coarse_label);
            match label {
                Some(gold) => items.push(ConsistencyItem {
                    dialog_id: d.id.clone(),
                    turn_index: e.turn_index,
                    edu_index: e.edu_index,
                    gold,
                    predicted: pred.clone(),
                }),
                None => unmatched += 1,
            }
        }
    }
    (items, unmatched)
}
