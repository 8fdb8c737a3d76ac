//! Multi-label evaluation: per-appliance MAE, precision, recall and accuracy.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
}

impl Confusion {
    /// 1.0 when nothing was predicted positive.
    pub fn precision(&self) -> f64 {
        let d = self.true_positives + self.false_positives;
        if d == 0 {
            1.0
        } else {
            self.true_positives as f64 / d as f64
        }
    }

    /// 1.0 when there are no actual positives.
    pub fn recall(&self) -> f64 {
        let d = self.true_positives + self.false_negatives;
        if d == 0 {
            1.0
        } else {
            self.true_positives as f64 / d as f64
        }
    }

    pub fn total(&self) -> usize {
        self.true_positives + self.false_positives + self.false_negatives + self.true_negatives
    }

    pub fn accuracy(&self) -> f64 {
        (self.true_positives + self.true_negatives) as f64 / self.total().max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApplianceMetrics {
    pub mae: f64,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub confusion: Confusion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_appliance: Vec<ApplianceMetrics>,
    /// Mean over samples and appliances of `[prediction == label]`.
    pub micro_accuracy: f64,
    /// Fraction of samples whose four predictions are all correct.
    pub exact_match_accuracy: f64,
}

/// Thresholds `probs` (`p >= threshold` is positive) against 0/1 `targets`.
pub fn evaluate_predictions(probs: &Matrix, targets: &Matrix, threshold: f64) -> Metrics {
    assert_eq!((probs.rows(), probs.cols()), (targets.rows(), targets.cols()), "prediction/target shape");
    let n = probs.rows();
    let k = probs.cols();
    let mut confusion = alloc::vec![Confusion::default(); k];
    let mut abs_err = alloc::vec![0.0; k];
    let mut exact = 0usize;
    for r in 0..n {
        let mut all = true;
        for i in 0..k {
            let p = probs[(r, i)];
            let y = targets[(r, i)] >= 0.5;
            let yhat = p >= threshold;
            abs_err[i] += (p - if y { 1.0 } else { 0.0 }).abs();
            let c = &mut confusion[i];
            match (yhat, y) {
                (true, true) => c.true_positives += 1,
                (true, false) => c.false_positives += 1,
                (false, true) => c.false_negatives += 1,
                (false, false) => c.true_negatives += 1,
            }
            all &= yhat == y;
        }
        exact += all as usize;
    }
    let per_appliance: Vec<ApplianceMetrics> = confusion
        .iter()
        .zip(&abs_err)
        .map(|(c, e)| ApplianceMetrics {
            mae: e / n.max(1) as f64,
            precision: c.precision(),
            recall: c.recall(),
            accuracy: c.accuracy(),
            confusion: *c,
        })
        .collect();
    let correct: usize = confusion.iter().map(|c| c.true_positives + c.true_negatives).sum();
    Metrics {
        per_appliance,
        micro_accuracy: correct as f64 / (n * k).max(1) as f64,
        exact_match_accuracy: exact as f64 / n.max(1) as f64,
    }
}
