//! Browser bindings: a noisy-blob session that trains the CE baseline and
//! meta soft labels side by side one epoch at a time, plus a per-sample
//! comparison of the two KL directions.
//!
//! Every export also works natively, which is how the tests below drive it.

use mslg::config::{preset, TrainConfig};
use mslg::data::{gen_blobs, inject, split, LabeledDataset, NoiseKind, NoiseSpec, ProbeConfig};
use mslg::eval::{model_accuracy, Evaluator};
use mslg::linalg::{softmax, softmax_backward, DenseMatrix};
use mslg::losses::{kl_loss_v1, kl_loss_v2};
use mslg::rng::{streams, Rng};
use mslg::trainer::{Method, Trainer};
use wasm_bindgen::prelude::*;

const DIM: usize = 2;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn flat_points(ds: &LabeledDataset) -> Vec<f64> {
    ds.features().as_slice().to_vec()
}

fn as_u32(v: &[usize]) -> Vec<u32> {
    v.iter().map(|&x| x as u32).collect()
}

#[wasm_bindgen]
pub struct Session {
    train: LabeledDataset,
    meta: LabeledDataset,
    test: LabeledDataset,
    config: TrainConfig,
    ce: Trainer,
    mslg: Trainer,
}

#[wasm_bindgen]
impl Session {
    /// 2-D blobs, split into train/meta/test (test is 20 %), with label noise
    /// on the training split. `noise_kind` is `uniform` or
    /// `feature_dependent`; `preset_name` is a training preset such as
    /// `blobs`.
    #[wasm_bindgen(constructor)]
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        classes: usize,
        separation: f64,
        noise_kind: &str,
        noise_ratio: f64,
        meta_fraction: f64,
        preset_name: &str,
        seed: u32,
    ) -> Result<Session, String> {
        let seed = u64::from(seed);
        let kind: NoiseKind = noise_kind.parse().map_err(err)?;
        let ds = gen_blobs(n, classes, DIM, separation, &mut Rng::with_stream(seed, streams::DATA_GEN))
            .map_err(err)?;
        let (train, meta, test) = split(&ds, meta_fraction, 0.2, &mut Rng::with_stream(seed, streams::SPLIT))
            .map_err(err)?;
        let spec = NoiseSpec {
            kind,
            ratio: noise_ratio,
            seed,
        };
        let (train, _) = inject(&train, &spec, &ProbeConfig::default()).map_err(err)?;
        let mut config = preset(preset_name).map_err(err)?;
        config.seed = seed;
        let ce = Trainer::new(config.clone(), train.training_data(), classes).map_err(err)?;
        let mslg = ce.clone();
        Ok(Session {
            train,
            meta,
            test,
            config,
            ce,
            mslg,
        })
    }

    pub fn classes(&self) -> usize {
        self.train.classes()
    }

    pub fn epoch(&self) -> usize {
        self.mslg.epoch()
    }

    pub fn total_epochs(&self) -> usize {
        self.config.total_epochs
    }

    pub fn warmup_epochs(&self) -> usize {
        self.config.warmup_epochs
    }

    pub fn done(&self) -> bool {
        self.epoch() >= self.config.total_epochs
    }

    /// Training points as `x0, y0, x1, y1, ...`.
    pub fn train_points(&self) -> Vec<f64> {
        flat_points(&self.train)
    }

    pub fn meta_points(&self) -> Vec<f64> {
        flat_points(&self.meta)
    }

    pub fn meta_labels(&self) -> Vec<u32> {
        as_u32(self.meta.true_labels())
    }

    pub fn true_labels(&self) -> Vec<u32> {
        as_u32(self.train.true_labels())
    }

    pub fn noisy_labels(&self) -> Vec<u32> {
        as_u32(self.train.noisy_labels())
    }

    /// Current soft labels of the meta-trained run, row-major N x C.
    pub fn soft_labels(&self) -> Vec<f64> {
        self.mslg.store().all_soft_labels().into_vec()
    }

    pub fn hard_labels(&self) -> Vec<u32> {
        as_u32(&self.mslg.store().hard_labels())
    }

    /// `[xmin, xmax, ymin, ymax]` over all splits.
    pub fn bounds(&self) -> Vec<f64> {
        let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        for ds in [&self.train, &self.meta, &self.test] {
            for p in ds.features().row_iter() {
                b[0] = b[0].min(p[0]);
                b[1] = b[1].max(p[0]);
                b[2] = b[2].min(p[1]);
                b[3] = b[3].max(p[1]);
            }
        }
        b.to_vec()
    }

    /// One epoch of both runs. Returns `[epoch, ce_test_accuracy,
    /// ce_train_loss, mslg_test_accuracy, mslg_train_loss, meta_loss,
    /// label_recovery_rate, mean_grad_alignment]`, or an empty vector once
    /// training is finished.
    pub fn step(&mut self) -> Result<Vec<f64>, String> {
        if self.done() {
            return Ok(Vec::new());
        }
        let monitor = Evaluator {
            train: &self.train,
            test: &self.test,
        };
        let data = self.train.training_data();
        let meta = self.meta.training_data();
        let c = self.ce.run_epoch(Method::Ce, data, meta, &monitor).map_err(err)?;
        let m = self.mslg.run_epoch(Method::Mslg, data, meta, &monitor).map_err(err)?;
        Ok(vec![
            m.epoch as f64,
            c.test_accuracy,
            c.train_loss,
            m.test_accuracy,
            m.train_loss,
            m.meta_loss,
            m.label_recovery_rate,
            m.mean_grad_alignment,
        ])
    }

    /// Predicted class on a `res x res` grid over `bounds()`, row 0 at the
    /// top. `which` is `ce` or `mslg`.
    pub fn decision_grid(&self, which: &str, res: usize) -> Result<Vec<u32>, String> {
        let model = match which.parse::<Method>().map_err(err)? {
            Method::Ce => self.ce.model(),
            Method::Mslg => self.mslg.model(),
        };
        let b = self.bounds();
        let (dx, dy) = ((b[1] - b[0]) / res as f64, (b[3] - b[2]) / res as f64);
        let mut pts = Vec::with_capacity(res * res * DIM);
        for r in 0..res {
            for c in 0..res {
                pts.push(b[0] + (c as f64 + 0.5) * dx);
                pts.push(b[3] - (r as f64 + 0.5) * dy);
            }
        }
        let x = DenseMatrix::from_vec(res * res, DIM, pts).map_err(err)?;
        Ok(as_u32(&model.predict(&x).map_err(err)?.argmax_rows()))
    }

    /// Test accuracy of `ce` or `mslg` right now.
    pub fn test_accuracy(&self, which: &str) -> Result<f64, String> {
        let model = match which.parse::<Method>().map_err(err)? {
            Method::Ce => self.ce.model(),
            Method::Mslg => self.mslg.model(),
        };
        model_accuracy(model, self.test.features(), self.test.true_labels()).map_err(err)
    }
}

/// Both KL directions for one prediction/label pair given as logits.
#[wasm_bindgen]
pub struct KlComparison {
    pred: Vec<f64>,
    label: Vec<f64>,
    v2: f64,
    v1: f64,
    v2_pred_grad: Vec<f64>,
    v1_pred_grad: Vec<f64>,
    v2_label_grad: Vec<f64>,
    v1_label_grad: Vec<f64>,
}

#[wasm_bindgen]
impl KlComparison {
    #[wasm_bindgen(getter)]
    pub fn pred(&self) -> Vec<f64> {
        self.pred.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn label(&self) -> Vec<f64> {
        self.label.clone()
    }

    /// `KL(f || yhat)`.
    #[wasm_bindgen(getter)]
    pub fn v2(&self) -> f64 {
        self.v2
    }

    /// `KL(yhat || f)`.
    #[wasm_bindgen(getter)]
    pub fn v1(&self) -> f64 {
        self.v1
    }

    /// Gradient of `KL(f || yhat)` with respect to the prediction logits.
    #[wasm_bindgen(getter)]
    pub fn v2_pred_grad(&self) -> Vec<f64> {
        self.v2_pred_grad.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn v1_pred_grad(&self) -> Vec<f64> {
        self.v1_pred_grad.clone()
    }

    /// Gradient of `KL(f || yhat)` with respect to the label logits.
    #[wasm_bindgen(getter)]
    pub fn v2_label_grad(&self) -> Vec<f64> {
        self.v2_label_grad.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn v1_label_grad(&self) -> Vec<f64> {
        self.v1_label_grad.clone()
    }
}

#[wasm_bindgen]
pub fn compare_kl(pred_logits: Vec<f64>, label_logits: Vec<f64>) -> Result<KlComparison, String> {
    if pred_logits.len() != label_logits.len() || pred_logits.is_empty() {
        return Err(format!(
            "need two logit vectors of the same non-zero length, got {} and {}",
            pred_logits.len(),
            label_logits.len()
        ));
    }
    let pred = softmax(&pred_logits);
    let label = softmax(&label_logits);
    let c = pred.len();
    let f = DenseMatrix::from_vec(1, c, pred.clone()).map_err(err)?;
    let y = DenseMatrix::from_vec(1, c, label.clone()).map_err(err)?;
    let v2 = kl_loss_v2(&f, &y).map_err(err)?;
    let v1 = kl_loss_v1(&f, &y).map_err(err)?;
    let through = |s: &[f64], g: &Option<DenseMatrix>| {
        softmax_backward(s, g.as_ref().expect("kl losses return both gradients").as_slice())
    };
    Ok(KlComparison {
        v2: v2.value,
        v1: v1.value,
        v2_pred_grad: through(&pred, &v2.grad_predictions),
        v1_pred_grad: through(&pred, &v1.grad_predictions),
        v2_label_grad: through(&label, &v2.grad_labels),
        v1_label_grad: through(&label, &v1.grad_labels),
        pred,
        label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Session {
        Session::new(400, 4, 6.0, "feature_dependent", 0.4, 0.05, "blobs-smoke", 3).unwrap()
    }

    #[test]
    fn session_shapes() {
        let s = small();
        let n = s.true_labels().len();
        assert_eq!(n, 400 - 80 - 20);
        assert_eq!(s.train_points().len(), 2 * n);
        assert_eq!(s.soft_labels().len(), 4 * n);
        assert_eq!(s.hard_labels(), s.noisy_labels());
        assert_eq!(s.meta_points().len(), 2 * s.meta_labels().len());
        let flipped = s
            .true_labels()
            .iter()
            .zip(s.noisy_labels())
            .filter(|(t, n)| **t != *n)
            .count();
        assert_eq!(flipped, (0.4 * n as f64).round() as usize);
        let b = s.bounds();
        assert!(b[0] < b[1] && b[2] < b[3]);
    }

    #[test]
    fn stepping_runs_to_completion_and_stops() {
        let mut s = small();
        let mut rows = Vec::new();
        while !s.done() {
            rows.push(s.step().unwrap());
        }
        assert_eq!(rows.len(), s.total_epochs());
        assert!(s.step().unwrap().is_empty());
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), 8);
            assert_eq!(r[0], i as f64);
            assert!(r.iter().all(|x| x.is_finite()));
        }
        // Both runs share the warm-up, so they agree until label epochs start.
        let w = s.warmup_epochs();
        for r in &rows[..w] {
            assert_eq!(r[1], r[3]);
        }
        let soft = s.soft_labels();
        for row in soft.chunks(4) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(s.test_accuracy("mslg").unwrap(), rows.last().unwrap()[3]);
    }

    #[test]
    fn same_seed_same_session() {
        let mut a = small();
        let mut b = small();
        for _ in 0..5 {
            assert_eq!(a.step().unwrap(), b.step().unwrap());
        }
        assert_eq!(a.decision_grid("mslg", 8).unwrap(), b.decision_grid("mslg", 8).unwrap());
    }

    #[test]
    fn grid_covers_every_cell_with_a_class() {
        let s = small();
        let g = s.decision_grid("ce", 10).unwrap();
        assert_eq!(g.len(), 100);
        assert!(g.iter().all(|&c| c < 4));
        assert!(s.decision_grid("svm", 4).is_err());
    }

    #[test]
    fn bad_inputs_are_errors() {
        assert!(Session::new(400, 4, 6.0, "sideways", 0.4, 0.05, "blobs", 0).is_err());
        assert!(Session::new(400, 4, 6.0, "uniform", 0.4, 0.05, "nope", 0).is_err());
        assert!(Session::new(400, 4, 6.0, "uniform", 0.4, 0.9, "blobs", 0).is_err());
        assert!(compare_kl(vec![0.0, 1.0], vec![0.0]).is_err());
    }

    #[test]
    fn kl_directions() {
        let same = compare_kl(vec![1.0, 2.0, 0.5], vec![1.0, 2.0, 0.5]).unwrap();
        assert!(same.v1().abs() < 1e-15 && same.v2().abs() < 1e-15);
        assert!(same.v2_pred_grad().iter().all(|g| g.abs() < 1e-15));

        let k = compare_kl(vec![3.0, 0.0, -1.0], vec![-2.0, 2.0, 0.0]).unwrap();
        assert!(k.v1() > 0.0 && k.v2() > 0.0 && k.v1() != k.v2());
        // Reverse KL through the softmax is the familiar `f - yhat`.
        for ((g, f), y) in k.v1_pred_grad().iter().zip(k.pred()).zip(k.label()) {
            assert!((g - (f - y)).abs() < 1e-12);
        }
        // Finite-difference check of the forward-KL prediction gradient.
        let h = 1e-6;
        let base = vec![3.0, 0.0, -1.0];
        let lab = vec![-2.0, 2.0, 0.0];
        for j in 0..3 {
            let mut up = base.clone();
            let mut dn = base.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (compare_kl(up, lab.clone()).unwrap().v2() - compare_kl(dn, lab.clone()).unwrap().v2())
                / (2.0 * h);
            assert!((fd - k.v2_pred_grad()[j]).abs() < 1e-7, "{j}: {fd}");
        }
        for g in [k.v2_pred_grad(), k.v1_pred_grad(), k.v2_label_grad(), k.v1_label_grad()] {
            assert!(g.iter().sum::<f64>().abs() < 1e-12);
        }
    }
}
