use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::DatasetEntry;
use crate::error::EvalError;
use crate::pipeline::Prediction;
use crate::repo::CommitId;

/// Micro-averaged scores together with the counts they come from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

/// Harmonic mean, 0 when both inputs are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        Metrics {
            precision,
            recall,
            f1: f1_score(precision, recall),
            tp,
            fp,
            fn_,
        }
    }

    /// Sums the counts and recomputes the scores.
    pub fn merge(&self, other: &Metrics) -> Metrics {
        Metrics::from_counts(self.tp + other.tp, self.fp + other.fp, self.fn_ + other.fn_)
    }
}

/// Confusion counts of one prediction against its truth set.
pub fn confusion(predicted: &std::collections::BTreeSet<CommitId>, entry: &DatasetEntry) -> (u64, u64, u64) {
    let tp = predicted.intersection(&entry.inducing).count() as u64;
    let fp = predicted.len() as u64 - tp;
    let fn_ = entry.inducing.len() as u64 - tp;
    (tp, fp, fn_)
}

/// Scores predictions against the dataset. Each truth entry must have
/// exactly one prediction for its fix; order does not matter.
pub fn compute_metrics(predictions: &[Prediction], truth: &[DatasetEntry]) -> Result<Metrics, EvalError> {
    if predictions.len() != truth.len() {
        return Err(EvalError::MisalignedDataset(format!(
            "{} predictions for {} entries",
            predictions.len(),
            truth.len()
        )));
    }
    let mut by_fix: BTreeMap<&CommitId, &Prediction> = BTreeMap::new();
    for p in predictions {
        if by_fix.insert(&p.fix, p).is_some() {
            return Err(EvalError::MisalignedDataset(format!("two predictions for fix {}", p.fix)));
        }
    }
    let mut total = Metrics::default();
    for entry in truth {
        let p = by_fix
            .remove(&entry.fix)
            .ok_or_else(|| EvalError::MisalignedDataset(format!("no prediction for {} {}", entry.repo, entry.fix)))?;
        let (tp, fp, fn_) = confusion(&p.predicted, entry);
        total = total.merge(&Metrics::from_counts(tp, fp, fn_));
    }
    Ok(total)
}

/// Mean of per-repeat scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AveragedMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn average(runs: &[Metrics]) -> AveragedMetrics {
    if runs.is_empty() {
        return AveragedMetrics::default();
    }
    let n = runs.len() as f64;
    AveragedMetrics {
        precision: runs.iter().map(|m| m.precision).sum::<f64>() / n,
        recall: runs.iter().map(|m| m.recall).sum::<f64>() / n,
        f1: runs.iter().map(|m| m.f1).sum::<f64>() / n,
    }
}
