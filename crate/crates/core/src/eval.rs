//! Scoring against the hidden true labels.

use crate::data::LabeledDataset;
use crate::labels::SoftLabelStore;
use crate::linalg::DenseMatrix;
use crate::model::{MlpModel, ModelError};
use crate::trainer::Monitor;

/// Fraction of positions where `pred == truth`; 0 for empty input.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(pred.len(), truth.len(), "accuracy: length mismatch");
    if pred.is_empty() {
        return 0.0;
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / pred.len() as f64
}

pub fn model_accuracy(model: &MlpModel, features: &DenseMatrix, truth: &[usize]) -> Result<f64, ModelError> {
    Ok(accuracy(&model.predict(features)?.argmax_rows(), truth))
}

/// Among samples with `noisy != truth`, the fraction whose `pred` equals
/// `truth`. 0 when nothing is corrupted.
pub fn recovery_rate(pred: &[usize], noisy: &[usize], truth: &[usize]) -> f64 {
    let mut corrupted = 0usize;
    let mut recovered = 0usize;
    for ((p, n), t) in pred.iter().zip(noisy).zip(truth) {
        if n != t {
            corrupted += 1;
            recovered += usize::from(p == t);
        }
    }
    if corrupted == 0 {
        0.0
    } else {
        recovered as f64 / corrupted as f64
    }
}

/// `m[true][predicted]` counts.
pub fn confusion_matrix(pred: &[usize], truth: &[usize], classes: usize) -> Vec<Vec<u64>> {
    let mut m = vec![vec![0u64; classes]; classes];
    for (&p, &t) in pred.iter().zip(truth) {
        m[t][p] += 1;
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseDetection {
    pub flagged: usize,
    pub corrupted: usize,
    pub true_positives: usize,
    /// 0 when nothing is flagged.
    pub precision: f64,
    /// 0 when nothing is corrupted.
    pub recall: f64,
}

/// A sample is flagged noisy when its hard soft label disagrees with the
/// observed label.
pub fn noise_detection(hard: &[usize], noisy: &[usize], truth: &[usize]) -> NoiseDetection {
    let (mut flagged, mut corrupted, mut tp) = (0, 0, 0);
    for ((h, n), t) in hard.iter().zip(noisy).zip(truth) {
        let f = h != n;
        let c = n != t;
        flagged += usize::from(f);
        corrupted += usize::from(c);
        tp += usize::from(f && c);
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    NoiseDetection {
        flagged,
        corrupted,
        true_positives: tp,
        precision: ratio(tp, flagged),
        recall: ratio(tp, corrupted),
    }
}

/// Per-epoch monitor backed by the test split and the training split's
/// hidden labels.
pub struct Evaluator<'a> {
    pub train: &'a LabeledDataset,
    pub test: &'a LabeledDataset,
}

impl Monitor for Evaluator<'_> {
    fn test_accuracy(&self, model: &MlpModel) -> f64 {
        if self.test.is_empty() {
            return 0.0;
        }
        model_accuracy(model, self.test.features(), self.test.true_labels()).unwrap_or(f64::NAN)
    }

    fn label_recovery_rate(&self, store: &SoftLabelStore) -> f64 {
        recovery_rate(
            &store.hard_labels(),
            self.train.noisy_labels(),
            self.train.true_labels(),
        )
    }
}
