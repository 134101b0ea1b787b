//! Binary-classification metrics.
//!
//! All metrics take raw scores in `[0, 1]` and hard labels. Thresholded
//! metrics predict the positive class when `score >= threshold`. ROC AUC is
//! computed by the rank-statistic (Mann–Whitney) route with average ranks for
//! ties, which equals the area under the ROC curve. Log loss uses natural
//! logarithms with the same probability clamp as training.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Result, SimError};
use crate::model::{forward, LoraAdapter, ModelSpec, ParameterSet, PROB_EPS};

/// Decision threshold used by the evaluation pipeline.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Bundle of evaluation results on one score/label sample.
///
/// `confusion[actual][predicted]` counts outcomes, so `confusion[1][1]` is
/// true positives. `roc_auc` is `None` when only one class is present (the
/// ranking metric is undefined there).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub f1: f64,
    pub roc_auc: Option<f64>,
    pub log_loss: f64,
    pub confusion: [[u64; 2]; 2],
    pub sample_count: usize,
}

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.is_empty() {
        return Err(SimError::usage("metrics over an empty sample"));
    }
    if scores.len() != labels.len() {
        return Err(SimError::shape(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(SimError::numeric("scores contain a non-finite entry"));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(SimError::usage("labels must be 0 or 1"));
    }
    Ok(())
}

/// 2×2 confusion matrix indexed `[actual][predicted]`.
pub fn confusion_matrix(scores: &[f64], labels: &[u8], threshold: f64) -> Result<[[u64; 2]; 2]> {
    check_inputs(scores, labels)?;
    if !threshold.is_finite() {
        return Err(SimError::usage("threshold must be finite"));
    }
    let mut m = [[0u64; 2]; 2];
    for (&s, &y) in scores.iter().zip(labels) {
        let predicted = usize::from(s >= threshold);
        m[y as usize][predicted] += 1;
    }
    Ok(m)
}

/// Fraction of correct predictions at `threshold`.
pub fn accuracy(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    let m = confusion_matrix(scores, labels, threshold)?;
    let correct = m[0][0] + m[1][1];
    Ok(correct as f64 / scores.len() as f64)
}

/// F1 of the positive class at `threshold`; defined as 0 when there are no
/// true positives (covers the empty-precision and empty-recall cases).
pub fn f1(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    let m = confusion_matrix(scores, labels, threshold)?;
    let tp = m[1][1] as f64;
    if m[1][1] == 0 {
        return Ok(0.0);
    }
    let fp = m[0][1] as f64;
    let fn_ = m[1][0] as f64;
    let precision = tp / (tp + fp);
    let recall = tp / (tp + fn_);
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Area under the ROC curve via average ranks (Mann–Whitney statistic).
///
/// Errors with [`SimError::UndefinedMetric`] when only one class is present.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(SimError::UndefinedMetric(format!(
            "ROC AUC needs both classes, found {n_pos} positives and {n_neg} negatives"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].partial_cmp(&scores[j]).unwrap());

    // Average ranks over tie groups (ranks are 1-based).
    let mut positive_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mean_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                positive_rank_sum += mean_rank;
            }
        }
        i = j + 1;
    }
    let n_pos = n_pos as f64;
    Ok((positive_rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg as f64))
}

/// Mean negative log-likelihood with probabilities clamped to
/// `[PROB_EPS, 1 - PROB_EPS]`; natural logarithm.
pub fn log_loss(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let mut total = 0.0;
    for (&s, &y) in scores.iter().zip(labels) {
        let p = s.clamp(PROB_EPS, 1.0 - PROB_EPS);
        total -= if y == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(total / scores.len() as f64)
}

/// Compute the full report from scores and labels.
pub fn report_from_scores(scores: &[f64], labels: &[u8]) -> Result<MetricReport> {
    let confusion = confusion_matrix(scores, labels, DEFAULT_THRESHOLD)?;
    let roc = match roc_auc(scores, labels) {
        Ok(v) => Some(v),
        Err(SimError::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricReport {
        accuracy: accuracy(scores, labels, DEFAULT_THRESHOLD)?,
        f1: f1(scores, labels, DEFAULT_THRESHOLD)?,
        roc_auc: roc,
        log_loss: log_loss(scores, labels)?,
        confusion,
        sample_count: scores.len(),
    })
}

/// Run the model on `data` and report all metrics.
pub fn evaluate(
    spec: &ModelSpec,
    params: &ParameterSet,
    adapters: &[LoraAdapter],
    data: &Dataset,
) -> Result<MetricReport> {
    let scores = forward(spec, params, adapters, data.features())?;
    report_from_scores(scores.as_slice().unwrap(), data.labels())
}

/// Scores of the model on `data`, as a plain vector.
pub fn scores(
    spec: &ModelSpec,
    params: &ParameterSet,
    adapters: &[LoraAdapter],
    features: &Array2<f64>,
) -> Result<Vec<f64>> {
    Ok(forward(spec, params, adapters, features)?.to_vec())
}
