//! Two-stage training: cross-entropy warm-up on the noisy labels, then
//! alternating soft-label and parameter updates driven by a clean meta-set.
//!
//! One stage-two iteration on a batch `x` with soft labels `yhat`:
//!
//! 1. Virtual step: `theta_hat = theta - alpha * grad_theta KL(f_theta(x) || yhat)`.
//! 2. Meta gradient: `g_m = grad CCE(f_theta_hat(x_m), y_m)` at `theta_hat`.
//! 3. Label gradient: `d L_m / d yhat = -alpha * (d^2 L_n / d yhat d theta) g_m`.
//!    The mixed derivative is contracted with `g_m` by a central difference
//!    of the analytic `d L_n / d yhat` at `theta +- eps g_m`, so only two
//!    extra forward passes are needed.
//! 4. Label logits move by `-beta` times that gradient (through the softmax).
//! 5. Parameters take an SGD step on `KL(f || yhat_new) + w * H(f)`.

use thiserror::Error;

use crate::config::{ConfigError, TrainConfig};
use crate::data::TrainingData;
use crate::labels::{LabelError, SoftLabelStore};
use crate::linalg::DenseMatrix;
use crate::losses::{cce_loss, classification_objective, kl_loss_v2, LossError};
use crate::model::{check_finite, sgd_step, ForwardCache, MlpModel, ModelError, ParamVector, SgdState};
use crate::rng::{streams, Rng};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("meta-set is empty")]
    EmptyMetaSet,
    #[error("{0} labels for {1} training rows")]
    LabelCount(usize, usize),
    #[error("non-finite {what} in epoch {epoch}")]
    NonFinite { epoch: usize, what: &'static str },
    #[error("epoch callback failed: {0}")]
    Callback(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Cross-entropy on the noisy labels for every epoch.
    Ce,
    /// Warm-up, then meta soft-label training.
    Mslg,
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ce" => Ok(Method::Ce),
            "mslg" => Ok(Method::Mslg),
            other => Err(format!("unknown method `{other}` (expected ce or mslg)")),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Ce => "ce",
            Method::Mslg => "mslg",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub meta_loss: f64,
    pub test_accuracy: f64,
    pub label_recovery_rate: f64,
    /// Mean over batches of `g_m . grad_theta L_n`; zero during warm-up.
    pub mean_grad_alignment: f64,
    pub lr: f64,
}

impl EpochMetrics {
    pub const CSV_HEADER: &'static str =
        "epoch,train_loss,meta_loss,test_accuracy,label_recovery_rate,mean_grad_alignment,lr";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{},{},{:e},{:e}",
            self.epoch,
            self.train_loss,
            self.meta_loss,
            self.test_accuracy,
            self.label_recovery_rate,
            self.mean_grad_alignment,
            self.lr
        )
    }
}

/// End-of-epoch diagnostics that need information the trainer must not see.
pub trait Monitor {
    fn test_accuracy(&self, model: &MlpModel) -> f64;
    fn label_recovery_rate(&self, store: &SoftLabelStore) -> f64;
}

/// Reports zero for both diagnostics.
impl Monitor for () {
    fn test_accuracy(&self, _: &MlpModel) -> f64 {
        0.0
    }
    fn label_recovery_rate(&self, _: &SoftLabelStore) -> f64 {
        0.0
    }
}

/// One pass of plain cross-entropy SGD over `data` in a fresh seeded order.
/// Returns the sample-weighted mean batch loss.
pub fn cce_epoch(
    model: &mut MlpModel,
    opt: &mut SgdState,
    data: TrainingData<'_>,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<f64, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let order = rng.permutation(data.len());
    let mut total = 0.0;
    for ids in order.chunks(batch_size.max(1)) {
        let x = data.features.select_rows(ids);
        let y: Vec<usize> = ids.iter().map(|&i| data.labels[i]).collect();
        let cache = model.forward(&x)?;
        let loss = cce_loss(cache.output(), &y)?;
        let grads = model.backward(&cache, loss.grad_predictions.as_ref().expect("cce grad"))?;
        sgd_step(model, &grads, opt)?;
        total += loss.value * ids.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Parameters after one step on `KL(f || yhat)`, plus the step's gradient.
fn look_ahead(
    model: &MlpModel,
    cache: &ForwardCache,
    yhat: &DenseMatrix,
    alpha: f64,
    opt: Option<&SgdState>,
) -> Result<(MlpModel, ParamVector), TrainError> {
    let loss = kl_loss_v2(cache.output(), yhat)?;
    let grad = model.backward(cache, loss.grad_predictions.as_ref().expect("kl grad"))?;
    check_finite(&grad)?;
    let mut step = grad.clone();
    if let Some(opt) = opt {
        // v_next = momentum * v + g + wd * theta
        step = opt.velocity.scale(opt.momentum);
        step.axpy(1.0, &grad);
        step.axpy(opt.weight_decay, model.params());
    }
    Ok((model.perturb(&step, -alpha)?, grad))
}

/// `theta - alpha * grad_theta KL(f_theta(x) || yhat)`; `model` is untouched.
pub fn virtual_step(
    model: &MlpModel,
    x: &DenseMatrix,
    yhat: &DenseMatrix,
    alpha: f64,
) -> Result<MlpModel, TrainError> {
    let cache = model.forward(x)?;
    Ok(look_ahead(model, &cache, yhat, alpha, None)?.0)
}

/// `-alpha * (d^2 L_n / d yhat d theta) direction`, where `L_n = KL(f_theta(x) || yhat)`.
///
/// Central difference of the analytic `d L_n / d yhat` at
/// `theta +- eps * direction` with `eps = rel_eps * (1 + |theta|) / |direction|`.
/// Returns zeros when `|direction| < 1e-12`.
pub fn label_hvp(
    model: &MlpModel,
    x: &DenseMatrix,
    yhat: &DenseMatrix,
    direction: &ParamVector,
    alpha: f64,
    rel_eps: f64,
) -> Result<DenseMatrix, TrainError> {
    let dir_norm = direction.norm();
    if dir_norm < 1e-12 {
        return Ok(DenseMatrix::zeros(yhat.rows(), yhat.cols()));
    }
    let eps = rel_eps * (1.0 + model.params().norm()) / dir_norm;
    let label_grad = |sign: f64| -> Result<DenseMatrix, TrainError> {
        let shifted = model.perturb(direction, sign * eps)?;
        let f = shifted.predict(x)?;
        Ok(kl_loss_v2(&f, yhat)?.grad_labels.expect("kl label grad"))
    };
    let plus = label_grad(1.0)?;
    let minus = label_grad(-1.0)?;
    let scale = -alpha / (2.0 * eps);
    let data = plus
        .as_slice()
        .iter()
        .zip(minus.as_slice())
        .map(|(p, m)| scale * (p - m))
        .collect();
    let out = DenseMatrix::from_vec(yhat.rows(), yhat.cols(), data).expect("same shape");
    if !out.is_finite() {
        return Err(TrainError::NonFinite {
            epoch: 0,
            what: "label gradient",
        });
    }
    Ok(out)
}

/// Result of [`meta_label_gradient`].
#[derive(Debug, Clone)]
pub struct MetaGradient {
    /// `d L_m(theta_hat(yhat)) / d yhat`, one row per training sample.
    pub grad_yhat: DenseMatrix,
    /// Meta loss at the virtual parameters.
    pub meta_loss: f64,
    /// `g_m`: meta-loss gradient at the virtual parameters.
    pub meta_grad: ParamVector,
    /// Training-loss gradient at the current parameters.
    pub train_grad: ParamVector,
}

impl MetaGradient {
    /// Batch mean of the per-sample alignments `g_m . grad_theta L_n^j`,
    /// which equals `g_m . grad_theta L_n` for the batch-mean loss.
    pub fn alignment(&self) -> f64 {
        self.meta_grad.dot(&self.train_grad)
    }
}

fn meta_gradient_with_cache(
    model: &MlpModel,
    cache: &ForwardCache,
    x: &DenseMatrix,
    yhat: &DenseMatrix,
    meta: TrainingData<'_>,
    cfg: &MetaStep<'_>,
) -> Result<MetaGradient, TrainError> {
    let (theta_hat, train_grad) = look_ahead(model, cache, yhat, cfg.alpha, cfg.opt)?;
    let meta_cache = theta_hat.forward(meta.features)?;
    let meta_loss = cce_loss(meta_cache.output(), meta.labels)?;
    let meta_grad = theta_hat.backward(
        &meta_cache,
        meta_loss.grad_predictions.as_ref().expect("cce grad"),
    )?;
    check_finite(&meta_grad)?;
    let grad_yhat = label_hvp(model, x, yhat, &meta_grad, cfg.alpha, cfg.hvp_epsilon)?;
    Ok(MetaGradient {
        grad_yhat,
        meta_loss: meta_loss.value,
        meta_grad,
        train_grad,
    })
}

struct MetaStep<'a> {
    alpha: f64,
    hvp_epsilon: f64,
    opt: Option<&'a SgdState>,
}

/// Gradient of the meta loss after a virtual step, with respect to the soft
/// labels of the training batch `x`.
pub fn meta_label_gradient(
    model: &MlpModel,
    x: &DenseMatrix,
    yhat: &DenseMatrix,
    meta: TrainingData<'_>,
    alpha: f64,
    hvp_epsilon: f64,
) -> Result<MetaGradient, TrainError> {
    if meta.is_empty() {
        return Err(TrainError::EmptyMetaSet);
    }
    let cache = model.forward(x)?;
    let step = MetaStep {
        alpha,
        hvp_epsilon,
        opt: None,
    };
    meta_gradient_with_cache(model, &cache, x, yhat, meta, &step)
}

/// `meta_grad . grad_theta KL(f_theta(x_j) || yhat_j)` for one training sample.
pub fn grad_alignment(
    model: &MlpModel,
    x_j: &[f64],
    yhat_j: &[f64],
    meta_grad: &ParamVector,
) -> Result<f64, TrainError> {
    let x = DenseMatrix::from_rows(&[x_j]);
    let y = DenseMatrix::from_rows(&[yhat_j]);
    let cache = model.forward(&x)?;
    let loss = kl_loss_v2(cache.output(), &y)?;
    let g = model.backward(&cache, loss.grad_predictions.as_ref().expect("kl grad"))?;
    Ok(alignment(meta_grad, &g))
}

pub fn alignment(meta_grad: &ParamVector, sample_grad: &ParamVector) -> f64 {
    meta_grad.dot(sample_grad)
}

/// Mutable training state shared by both stages.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: TrainConfig,
    model: MlpModel,
    store: SoftLabelStore,
    opt: SgdState,
    batch_rng: Rng,
    meta_rng: Rng,
    meta_order: Vec<usize>,
    meta_pos: usize,
    epoch: usize,
    skipped_rows: usize,
    aborted_batches: usize,
}

impl Trainer {
    pub fn new(
        cfg: TrainConfig,
        data: TrainingData<'_>,
        classes: usize,
    ) -> Result<Self, TrainError> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(TrainError::EmptyTrainingSet);
        }
        let mut sizes = vec![data.features.cols()];
        sizes.extend(&cfg.hidden_layers);
        sizes.push(classes);
        let model = MlpModel::new(&sizes, &mut Rng::with_stream(cfg.seed, streams::MODEL_INIT))?;
        let store = SoftLabelStore::init_from_noisy(data.labels, classes, cfg.k)?;
        let opt = SgdState::new(
            model.param_count(),
            cfg.lambda_schedule.lr_at(0),
            cfg.momentum,
            cfg.weight_decay,
        );
        Ok(Self {
            batch_rng: Rng::with_stream(cfg.seed, streams::BATCHES),
            meta_rng: Rng::with_stream(cfg.seed, streams::META_BATCHES),
            meta_order: Vec::new(),
            meta_pos: 0,
            epoch: 0,
            skipped_rows: 0,
            aborted_batches: 0,
            cfg,
            model,
            store,
            opt,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn model(&self) -> &MlpModel {
        &self.model
    }

    pub fn store(&self) -> &SoftLabelStore {
        &self.store
    }

    /// Replaces the soft labels, e.g. with labels attached to dataset ids.
    pub fn set_store(&mut self, store: SoftLabelStore) -> Result<(), TrainError> {
        if store.len() != self.store.len() {
            return Err(TrainError::LabelCount(store.len(), self.store.len()));
        }
        self.store = store;
        Ok(())
    }

    /// Number of epochs completed.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Label rows left unchanged because their update was not finite.
    pub fn skipped_rows(&self) -> usize {
        self.skipped_rows
    }

    /// Batches whose label update was abandoned on a non-finite meta gradient.
    pub fn aborted_batches(&self) -> usize {
        self.aborted_batches
    }

    pub fn into_parts(self) -> (MlpModel, SoftLabelStore) {
        (self.model, self.store)
    }

    fn check_data(&self, data: TrainingData<'_>) -> Result<(), TrainError> {
        if data.len() != self.store.len() {
            return Err(TrainError::LabelCount(data.len(), self.store.len()));
        }
        Ok(())
    }

    fn begin_epoch(&mut self) -> f64 {
        let lr = self.cfg.lambda_schedule.lr_at(self.epoch);
        self.opt.lr = lr;
        lr
    }

    fn finish_epoch(
        &mut self,
        train_loss: f64,
        alignment: f64,
        meta: TrainingData<'_>,
        monitor: &dyn Monitor,
    ) -> Result<EpochMetrics, TrainError> {
        let meta_loss = if meta.is_empty() {
            0.0
        } else {
            cce_loss(&self.model.predict(meta.features)?, meta.labels)?.value
        };
        if !train_loss.is_finite() {
            return Err(TrainError::NonFinite {
                epoch: self.epoch,
                what: "training loss",
            });
        }
        let metrics = EpochMetrics {
            epoch: self.epoch,
            train_loss,
            meta_loss,
            test_accuracy: monitor.test_accuracy(&self.model),
            label_recovery_rate: monitor.label_recovery_rate(&self.store),
            mean_grad_alignment: alignment,
            lr: self.opt.lr,
        };
        self.epoch += 1;
        Ok(metrics)
    }

    /// Cross-entropy epoch on the observed labels.
    pub fn warmup_epoch(
        &mut self,
        data: TrainingData<'_>,
        meta: TrainingData<'_>,
        monitor: &dyn Monitor,
    ) -> Result<EpochMetrics, TrainError> {
        self.check_data(data)?;
        self.begin_epoch();
        let loss = cce_epoch(
            &mut self.model,
            &mut self.opt,
            data,
            self.cfg.batch_size,
            &mut self.batch_rng,
        )?;
        self.finish_epoch(loss, 0.0, meta, monitor)
    }

    /// Parameter-only epoch on the current soft labels, which stay fixed.
    pub fn frozen_label_epoch(
        &mut self,
        data: TrainingData<'_>,
        meta: TrainingData<'_>,
        monitor: &dyn Monitor,
    ) -> Result<EpochMetrics, TrainError> {
        self.check_data(data)?;
        self.begin_epoch();
        let order = self.batch_rng.permutation(data.len());
        let mut total = 0.0;
        for ids in order.chunks(self.cfg.batch_size) {
            let x = data.features.select_rows(ids);
            let cache = self.model.forward(&x)?;
            let yhat = self.store.soft_labels(ids)?;
            let obj = classification_objective(cache.output(), &yhat, self.cfg.entropy_weight)?;
            let grads = self
                .model
                .backward(&cache, obj.grad_predictions.as_ref().expect("objective grad"))?;
            sgd_step(&mut self.model, &grads, &mut self.opt)?;
            total += obj.value * ids.len() as f64;
        }
        self.finish_epoch(total / data.len() as f64, 0.0, meta, monitor)
    }

    fn next_meta_batch(&mut self, meta_len: usize) -> Vec<usize> {
        let b = self.cfg.batch_size.min(meta_len);
        if self.meta_order.len() != meta_len || self.meta_pos + b > meta_len {
            self.meta_order = self.meta_rng.permutation(meta_len);
            self.meta_pos = 0;
        }
        let ids = self.meta_order[self.meta_pos..self.meta_pos + b].to_vec();
        self.meta_pos += b;
        ids
    }

    /// Stage-two epoch: per batch, update the batch's soft labels along the
    /// meta gradient, then take a parameter step on the updated labels.
    pub fn mslg_epoch(
        &mut self,
        data: TrainingData<'_>,
        meta: TrainingData<'_>,
        monitor: &dyn Monitor,
    ) -> Result<EpochMetrics, TrainError> {
        self.check_data(data)?;
        if meta.is_empty() {
            return Err(TrainError::EmptyMetaSet);
        }
        self.begin_epoch();
        let order = self.batch_rng.permutation(data.len());
        let mut total = 0.0;
        let mut alignment_sum = 0.0;
        let mut batches = 0usize;
        for ids in order.chunks(self.cfg.batch_size) {
            let x = data.features.select_rows(ids);
            let cache = self.model.forward(&x)?;
            let yhat = self.store.soft_labels(ids)?;

            let meta_ids = self.next_meta_batch(meta.len());
            let meta_x = meta.features.select_rows(&meta_ids);
            let meta_y: Vec<usize> = meta_ids.iter().map(|&i| meta.labels[i]).collect();
            let meta_batch = TrainingData {
                features: &meta_x,
                labels: &meta_y,
            };
            let step = MetaStep {
                alpha: self.cfg.alpha,
                hvp_epsilon: self.cfg.hvp_epsilon,
                opt: (!self.cfg.virtual_step_plain).then_some(&self.opt),
            };
            match meta_gradient_with_cache(&self.model, &cache, &x, &yhat, meta_batch, &step) {
                Ok(mg) => {
                    alignment_sum += mg.alignment();
                    batches += 1;
                    self.skipped_rows +=
                        self.store
                            .apply_label_gradient(ids, &mg.grad_yhat, self.cfg.beta)?;
                }
                Err(TrainError::NonFinite { .. })
                | Err(TrainError::Model(ModelError::NonFiniteGradient { .. })) => {
                    self.aborted_batches += 1;
                }
                Err(e) => return Err(e),
            }

            let yhat = self.store.soft_labels(ids)?;
            let obj = classification_objective(cache.output(), &yhat, self.cfg.entropy_weight)?;
            let grads = self
                .model
                .backward(&cache, obj.grad_predictions.as_ref().expect("objective grad"))?;
            sgd_step(&mut self.model, &grads, &mut self.opt)?;
            total += obj.value * ids.len() as f64;
        }
        let alignment = if batches > 0 {
            alignment_sum / batches as f64
        } else {
            0.0
        };
        self.finish_epoch(total / data.len() as f64, alignment, meta, monitor)
    }

    /// Runs the next epoch of `method`: warm-up epochs first, then stage two.
    pub fn run_epoch(
        &mut self,
        method: Method,
        data: TrainingData<'_>,
        meta: TrainingData<'_>,
        monitor: &dyn Monitor,
    ) -> Result<EpochMetrics, TrainError> {
        match method {
            Method::Mslg if self.epoch >= self.cfg.warmup_epochs => {
                self.mslg_epoch(data, meta, monitor)
            }
            _ => self.warmup_epoch(data, meta, monitor),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub store: SoftLabelStore,
    pub metrics: Vec<EpochMetrics>,
}

/// Full run of `cfg.total_epochs` epochs. `on_epoch` sees each epoch's
/// metrics and the trainer state after it.
pub fn train<F>(
    cfg: &TrainConfig,
    method: Method,
    data: TrainingData<'_>,
    meta: TrainingData<'_>,
    classes: usize,
    monitor: &dyn Monitor,
    mut on_epoch: F,
) -> Result<TrainOutcome, TrainError>
where
    F: FnMut(&EpochMetrics, &Trainer) -> Result<(), TrainError>,
{
    if method == Method::Mslg && cfg.total_epochs > cfg.warmup_epochs && meta.is_empty() {
        return Err(TrainError::EmptyMetaSet);
    }
    let mut trainer = Trainer::new(cfg.clone(), data, classes)?;
    let mut metrics = Vec::with_capacity(cfg.total_epochs);
    for _ in 0..cfg.total_epochs {
        let m = trainer.run_epoch(method, data, meta, monitor)?;
        on_epoch(&m, &trainer)?;
        metrics.push(m);
    }
    let (model, store) = trainer.into_parts();
    Ok(TrainOutcome {
        model,
        store,
        metrics,
    })
}
