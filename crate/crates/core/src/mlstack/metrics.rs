//! Classifier evaluation: confusion-matrix metrics at threshold 0.5 plus
//! rank-based ROC AUC and average precision, each with a 95% interval
//! (normal approximation; Hanley–McNeil for the AUC).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlstack::features::FEATURE_COUNT;
use crate::mlstack::model::Model;

/// Point estimate with a 95% interval, clamped to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricInterval {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

impl MetricInterval {
    fn from_se(value: f64, se: f64) -> MetricInterval {
        MetricInterval {
            value,
            lo: (value - 1.96 * se).max(0.0),
            hi: (value + 1.96 * se).min(1.0),
        }
    }

    /// Binomial proportion with a Wald interval.
    fn binomial(successes: usize, trials: usize) -> MetricInterval {
        let p = successes as f64 / trials as f64;
        MetricInterval::from_se(p, (p * (1.0 - p) / trials as f64).sqrt())
    }
}

/// Confusion counts at the decision threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// The seven evaluation metrics with intervals, plus the raw counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub threshold: f64,
    pub confusion: Confusion,
    pub accuracy: MetricInterval,
    pub precision: MetricInterval,
    pub recall: MetricInterval,
    pub specificity: MetricInterval,
    /// Proportion of predictions that are not false negatives:
    /// (TP + FP + TN) / total.
    pub prop_without_fn: MetricInterval,
    pub roc_auc: MetricInterval,
    pub average_precision: MetricInterval,
}

/// Evaluates scores in `[0, 1]` against binary labels. Fails when only one
/// class is present (the rank-based metrics are undefined there).
pub fn evaluate_scores(scores: &[f64], labels: &[u8]) -> Result<Metrics> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::invalid("scores and labels must be equal-length and nonempty"));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric(
            "single-class dataset: ROC AUC and average precision are undefined".into(),
        ));
    }

    let threshold = 0.5;
    let mut c = Confusion { tp: 0, fp: 0, tn: 0, fn_: 0 };
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    let total = c.total();

    let precision = if c.tp + c.fp == 0 {
        // No positive predictions: precision is vacuous; report 0.
        MetricInterval { value: 0.0, lo: 0.0, hi: 0.0 }
    } else {
        MetricInterval::binomial(c.tp, c.tp + c.fp)
    };

    Ok(Metrics {
        threshold,
        confusion: c,
        accuracy: MetricInterval::binomial(c.tp + c.tn, total),
        precision,
        recall: MetricInterval::binomial(c.tp, n_pos),
        specificity: MetricInterval::binomial(c.tn, n_neg),
        prop_without_fn: MetricInterval::binomial(c.tp + c.fp + c.tn, total),
        roc_auc: roc_auc(scores, labels, n_pos, n_neg),
        average_precision: average_precision(scores, labels, n_pos),
    })
}

/// Evaluates a model on a feature matrix.
pub fn evaluate(model: &Model, x: &[[f64; FEATURE_COUNT]], labels: &[u8]) -> Result<Metrics> {
    let scores = x
        .iter()
        .map(|row| model.predict_values(row))
        .collect::<Result<Vec<f64>>>()?;
    evaluate_scores(&scores, labels)
}

/// Midrank ROC AUC with the Hanley–McNeil standard error.
fn roc_auc(scores: &[f64], labels: &[u8], n_pos: usize, n_neg: usize) -> MetricInterval {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    // Midranks over tied score runs.
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            if labels[idx] == 1 {
                rank_sum_pos += midrank;
            }
        }
        start = end;
    }
    let np = n_pos as f64;
    let nn = n_neg as f64;
    let auc = (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
    let q1 = auc / (2.0 - auc);
    let q2 = 2.0 * auc * auc / (1.0 + auc);
    let var = (auc * (1.0 - auc) + (np - 1.0) * (q1 - auc * auc) + (nn - 1.0) * (q2 - auc * auc))
        / (np * nn);
    MetricInterval::from_se(auc, var.max(0.0).sqrt())
}

/// Average precision: mean over positives of precision at each positive,
/// scores descending (ties broken by original index for determinism).
fn average_precision(scores: &[f64], labels: &[u8], n_pos: usize) -> MetricInterval {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b].partial_cmp(&scores[a]).expect("finite scores").then(a.cmp(&b))
    });
    let mut tp = 0usize;
    let mut sum = 0.0;
    for (k, &idx) in order.iter().enumerate() {
        if labels[idx] == 1 {
            tp += 1;
            sum += tp as f64 / (k + 1) as f64;
        }
    }
    let ap = sum / n_pos as f64;
    MetricInterval::from_se(ap, (ap * (1.0 - ap) / n_pos as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn perfect_predictor_scores_one() {
        let scores = [0.9, 0.8, 0.1, 0.2];
        let labels = [1, 1, 0, 0];
        let m = evaluate_scores(&scores, &labels).unwrap();
        assert_eq!(m.accuracy.value, 1.0);
        assert_eq!(m.roc_auc.value, 1.0);
        assert_eq!(m.average_precision.value, 1.0);
        assert_eq!(m.prop_without_fn.value, 1.0);
        assert_eq!(m.confusion.fn_, 0);
    }

    #[test]
    fn random_predictor_is_near_half() {
        let mut rng = SplitMix64::new(12);
        let n = 10_000;
        let scores: Vec<f64> = (0..n).map(|_| rng.next_open_f64()).collect();
        let labels: Vec<u8> = (0..n).map(|k| (k % 2) as u8).collect();
        let m = evaluate_scores(&scores, &labels).unwrap();
        assert!((m.accuracy.value - 0.5).abs() < 0.02, "accuracy {}", m.accuracy.value);
        assert!((m.roc_auc.value - 0.5).abs() < 0.02, "auc {}", m.roc_auc.value);
        assert!((m.average_precision.value - 0.5).abs() < 0.03);
    }

    #[test]
    fn constant_scores_give_exactly_half_auc() {
        let scores = [0.5; 10];
        let labels = [1, 0, 1, 0, 1, 0, 1, 0, 1, 0];
        let m = evaluate_scores(&scores, &labels).unwrap();
        assert_eq!(m.roc_auc.value, 0.5);
    }

    #[test]
    fn accuracy_matches_confusion_arithmetic() {
        let mut rng = SplitMix64::new(13);
        let n = 500;
        let scores: Vec<f64> = (0..n).map(|_| rng.next_open_f64()).collect();
        let labels: Vec<u8> = (0..n).map(|_| (rng.next_below(2)) as u8).collect();
        let m = evaluate_scores(&scores, &labels).unwrap();
        let c = m.confusion;
        let direct = 1.0 - (c.fp + c.fn_) as f64 / c.total() as f64;
        assert!((m.accuracy.value - direct).abs() < 1e-15);
        assert_eq!(
            m.prop_without_fn.value,
            (c.tp + c.fp + c.tn) as f64 / c.total() as f64
        );
        assert!(m.accuracy.lo <= m.accuracy.value && m.accuracy.value <= m.accuracy.hi);
    }

    #[test]
    fn single_class_is_a_metric_error() {
        let scores = [0.1, 0.9, 0.5];
        assert!(matches!(evaluate_scores(&scores, &[1, 1, 1]), Err(Error::Metric(_))));
        assert!(matches!(evaluate_scores(&scores, &[0, 0, 0]), Err(Error::Metric(_))));
    }

    #[test]
    fn auc_handles_ties_by_midrank() {
        // Two positives above, two below, two tied in the middle with one
        // of each class: AUC = (4*? ) computed by hand = 0.78125 is avoided;
        // use a transparent case instead: scores {1,1,0,0} labels {1,0,1,0}
        // → pairs: (pos1 vs neg1: tie = 1/2), (pos1 vs neg2: win), (pos2 vs
        // neg1: loss), (pos2 vs neg2: tie) → (0.5 + 1 + 0 + 0.5) / 4 = 0.5.
        let m = evaluate_scores(&[1.0, 1.0, 0.0, 0.0], &[1, 0, 1, 0]).unwrap();
        assert_eq!(m.roc_auc.value, 0.5);
    }
}
