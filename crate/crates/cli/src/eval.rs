//! Evaluation report against the hidden labels of a dataset.

use std::path::Path;

use mslg::eval::{accuracy, confusion_matrix, noise_detection, recovery_rate};
use mslg::labels::SoftLabelStore;
use mslg::model::MlpModel;
use serde::Serialize;

use crate::error::CliError;
use crate::gen::load_dataset;

/// JSON schema of `eval.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// Model accuracy on the clean test split.
    pub test_accuracy: f64,
    /// Among corrupted training samples, the fraction whose soft-label argmax
    /// equals the true label.
    pub label_recovery_rate: f64,
    pub classes: usize,
    pub n_train: usize,
    pub n_corrupted: usize,
    pub n_test: usize,
    /// `confusion_matrix[true][predicted]` over the test split.
    pub confusion_matrix: Vec<Vec<u64>>,
    /// A training sample is flagged noisy when its soft-label argmax differs
    /// from its observed label.
    pub noise_detection: NoiseDetectionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseDetectionReport {
    pub flagged: usize,
    pub true_positives: usize,
    pub precision: f64,
    pub recall: f64,
}

pub fn evaluate(data_dir: &Path, checkpoint: &Path, labels: &Path) -> Result<EvalReport, CliError> {
    let (_, bundle) = load_dataset(data_dir)?;
    let model = MlpModel::load_checkpoint(checkpoint)?;
    let store = SoftLabelStore::load_snapshot(labels)?;
    let (train, test) = (&bundle.train, &bundle.test);
    let classes = bundle.classes();
    if model.input_dim() != bundle.dim() || model.num_classes() != classes {
        return Err(CliError::config(format!(
            "checkpoint is {}-in/{}-out but the dataset has D={} and C={classes}",
            model.input_dim(),
            model.num_classes(),
            bundle.dim()
        )));
    }
    if store.num_classes() != classes || store.sample_ids() != train.ids() {
        return Err(CliError::config(format!(
            "label snapshot ({} rows, {} classes) does not match the training split ({} rows, {classes} classes)",
            store.len(),
            store.num_classes(),
            train.len()
        )));
    }
    let pred = model.predict(test.features())?.argmax_rows();
    let hard = store.hard_labels();
    let det = noise_detection(&hard, train.noisy_labels(), train.true_labels());
    Ok(EvalReport {
        test_accuracy: accuracy(&pred, test.true_labels()),
        label_recovery_rate: recovery_rate(&hard, train.noisy_labels(), train.true_labels()),
        classes,
        n_train: train.len(),
        n_corrupted: det.corrupted,
        n_test: test.len(),
        confusion_matrix: confusion_matrix(&pred, test.true_labels(), classes),
        noise_detection: NoiseDetectionReport {
            flagged: det.flagged,
            true_positives: det.true_positives,
            precision: det.precision,
            recall: det.recall,
        },
    })
}

pub fn to_json(report: &EvalReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes") + "\n"
}
