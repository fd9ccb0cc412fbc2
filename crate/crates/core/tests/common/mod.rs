//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod gradcheck;

use mslg::data::TrainingData;
use mslg::linalg::{softmax_rows, DenseMatrix};
use mslg::losses::cce_loss;
use mslg::model::MlpModel;
use mslg::rng::Rng;
use mslg::trainer::virtual_step;

/// `|a - b| / max(|a|, |b|)`, or `|a - b|` when both are below `floor`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < floor {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

pub fn central_diff(mut f: impl FnMut(f64) -> f64, h: f64) -> f64 {
    (f(h) - f(-h)) / (2.0 * h)
}

pub fn normal_matrix(rows: usize, cols: usize, scale: f64, rng: &mut Rng) -> DenseMatrix {
    DenseMatrix::from_vec(rows, cols, (0..rows * cols).map(|_| scale * rng.normal()).collect())
        .unwrap()
}

/// A 2-4-2 network with batch 4 and meta batch 4.
pub struct TinyBilevel {
    pub model: MlpModel,
    pub x: DenseMatrix,
    pub logits: DenseMatrix,
    pub meta_x: DenseMatrix,
    pub meta_y: Vec<usize>,
}

impl TinyBilevel {
    pub fn new(seed: u64) -> Self {
        let mut rng = Rng::new(seed);
        let model = MlpModel::new(&[2, 4, 2], &mut rng).unwrap();
        let x = normal_matrix(4, 2, 1.0, &mut rng);
        let logits = normal_matrix(4, 2, 2.0, &mut rng);
        let meta_x = normal_matrix(4, 2, 1.0, &mut rng);
        let meta_y = (0..4).map(|_| rng.below(2) as usize).collect();
        Self {
            model,
            x,
            logits,
            meta_x,
            meta_y,
        }
    }

    pub fn yhat(&self) -> DenseMatrix {
        softmax_rows(&self.logits)
    }

    pub fn meta(&self) -> TrainingData<'_> {
        TrainingData {
            features: &self.meta_x,
            labels: &self.meta_y,
        }
    }

    /// `L_m(theta_hat(y^d))` evaluated from scratch.
    pub fn meta_loss_at(&self, logits: &DenseMatrix, alpha: f64) -> f64 {
        let hat = virtual_step(&self.model, &self.x, &softmax_rows(logits), alpha).unwrap();
        cce_loss(&hat.predict(&self.meta_x).unwrap(), &self.meta_y)
            .unwrap()
            .value
    }

    /// Brute-force `d L_m(theta_hat(y^d)) / d y^d` by central differences.
    pub fn brute_force_logit_grad(&self, alpha: f64, h: f64) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.logits.rows(), self.logits.cols());
        for r in 0..self.logits.rows() {
            for c in 0..self.logits.cols() {
                let g = central_diff(
                    |d| {
                        let mut l = self.logits.clone();
                        l.set(r, c, l.get(r, c) + d);
                        self.meta_loss_at(&l, alpha)
                    },
                    h,
                );
                out.set(r, c, g);
            }
        }
        out
    }
}

/// Maps a gradient with respect to `softmax(logits)` to one with respect to
/// the logits, row by row.
pub fn to_logit_grad(yhat: &DenseMatrix, grad_yhat: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(yhat.rows(), yhat.cols());
    for r in 0..yhat.rows() {
        out.row_mut(r)
            .copy_from_slice(&mslg::linalg::softmax_backward(yhat.row(r), grad_yhat.row(r)));
    }
    out
}

use mslg::config::TrainConfig;
use mslg::data::{gen_blobs, inject, split, LabeledDataset, NoiseKind, NoiseSpec, ProbeConfig};
use mslg::eval::Evaluator;
use mslg::rng::streams;
use mslg::trainer::{train, Method, TrainOutcome};

pub const BLOB_SEPARATION: f64 = 6.0;

/// 2000 four-class 2-D blobs: 20 % test, `meta_fraction` clean meta, the rest
/// training with feature-dependent noise at `ratio`.
pub fn desk_blobs(
    seed: u64,
    ratio: f64,
    meta_fraction: f64,
) -> (LabeledDataset, LabeledDataset, LabeledDataset) {
    let ds = gen_blobs(2000, 4, 2, BLOB_SEPARATION, &mut Rng::with_stream(seed, streams::DATA_GEN))
        .unwrap();
    let (train, meta, test) =
        split(&ds, meta_fraction, 0.2, &mut Rng::with_stream(seed, streams::SPLIT)).unwrap();
    let spec = NoiseSpec {
        kind: NoiseKind::FeatureDependent,
        ratio,
        seed,
    };
    let (train, _) = inject(&train, &spec, &ProbeConfig::default()).unwrap();
    (train, meta, test)
}

pub fn run(
    cfg: &TrainConfig,
    method: Method,
    train_ds: &LabeledDataset,
    meta: &LabeledDataset,
    test: &LabeledDataset,
) -> TrainOutcome {
    let monitor = Evaluator {
        train: train_ds,
        test,
    };
    train(
        cfg,
        method,
        train_ds.training_data(),
        meta.training_data(),
        train_ds.classes(),
        &monitor,
        |_, _| Ok(()),
    )
    .unwrap()
}
