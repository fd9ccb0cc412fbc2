//! Worst-case finite-difference mismatches for the losses and backprop.

use super::{central_diff, normal_matrix, rel_err};
use mslg::linalg::{softmax_backward, softmax_rows, DenseMatrix};
use mslg::losses::{cce_loss, entropy_loss, kl_loss_v1, kl_loss_v2, LossValue};
use mslg::model::{MlpModel, ParamVector};
use mslg::rng::Rng;

const FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug)]
pub enum Loss {
    KlV2,
    KlV1,
    Cce,
    Entropy,
}

pub const ALL: [Loss; 4] = [Loss::KlV2, Loss::KlV1, Loss::Cce, Loss::Entropy];

pub struct Targets {
    pub yhat: DenseMatrix,
    pub labels: Vec<usize>,
}

pub fn eval(loss: Loss, f: &DenseMatrix, t: &Targets) -> LossValue {
    match loss {
        Loss::KlV2 => kl_loss_v2(f, &t.yhat),
        Loss::KlV1 => kl_loss_v1(f, &t.yhat),
        Loss::Cce => cce_loss(f, &t.labels),
        Loss::Entropy => entropy_loss(f),
    }
    .unwrap()
}

fn targets(b: usize, c: usize, rng: &mut Rng) -> Targets {
    Targets {
        yhat: softmax_rows(&normal_matrix(b, c, 1.5, rng)),
        labels: (0..b).map(|_| rng.below(c as u64) as usize).collect(),
    }
}

fn shape(rng: &mut Rng) -> (usize, usize) {
    (1 + rng.below(4) as usize, 2 + rng.below(4) as usize)
}

/// Worst error of `grad` against differences of `value(softmax(z))` in `z`.
fn pre_softmax(z: &DenseMatrix, grad: &DenseMatrix, mut value: impl FnMut(&DenseMatrix) -> f64) -> f64 {
    let p = softmax_rows(z);
    let mut worst: f64 = 0.0;
    for r in 0..z.rows() {
        let analytic = softmax_backward(p.row(r), grad.row(r));
        for c in 0..z.cols() {
            let fd = central_diff(
                |d| {
                    let mut zz = z.clone();
                    zz.set(r, c, zz.get(r, c) + d);
                    value(&softmax_rows(&zz))
                },
                1e-5,
            );
            worst = worst.max(rel_err(analytic[c], fd, FLOOR));
        }
    }
    worst
}

/// Gradient with respect to the predictions, perturbing logits.
pub fn predictions(loss: Loss, case: u64) -> f64 {
    let mut rng = Rng::new(1000 + case);
    let (b, c) = shape(&mut rng);
    let z = normal_matrix(b, c, 1.5, &mut rng);
    let t = targets(b, c, &mut rng);
    let lv = eval(loss, &softmax_rows(&z), &t);
    pre_softmax(&z, lv.grad_predictions.as_ref().unwrap(), |f| eval(loss, f, &t).value)
}

/// Gradient of a KL loss with respect to the soft labels, perturbing logits.
pub fn labels(loss: Loss, case: u64) -> f64 {
    let mut rng = Rng::new(2000 + case);
    let (b, c) = shape(&mut rng);
    let f = softmax_rows(&normal_matrix(b, c, 1.5, &mut rng));
    let u = normal_matrix(b, c, 1.5, &mut rng);
    let with = |y: &DenseMatrix| Targets {
        yhat: y.clone(),
        labels: vec![],
    };
    let lv = eval(loss, &f, &with(&softmax_rows(&u)));
    pre_softmax(&u, lv.grad_labels.as_ref().unwrap(), |y| eval(loss, &f, &with(y)).value)
}

/// Gradient with respect to the predictions, perturbing each entry alone
/// (off the simplex by at most `h`, inside the loss tolerance).
pub fn raw_entries(loss: Loss, case: u64) -> f64 {
    let mut rng = Rng::new(3000 + case);
    let (b, c) = shape(&mut rng);
    let f = softmax_rows(&normal_matrix(b, c, 1.0, &mut rng));
    let t = targets(b, c, &mut rng);
    let g = eval(loss, &f, &t).grad_predictions.unwrap();
    (0..b * c)
        .map(|i| {
            let fd = central_diff(
                |d| {
                    let mut ff = f.clone();
                    ff.as_mut_slice()[i] += d;
                    eval(loss, &ff, &t).value
                },
                1e-7,
            );
            rel_err(g.as_slice()[i], fd, FLOOR)
        })
        .fold(0.0, f64::max)
}

fn random_net(rng: &mut Rng) -> (MlpModel, DenseMatrix) {
    let d = 1 + rng.below(4) as usize;
    let c = 2 + rng.below(3) as usize;
    let mut sizes = vec![d];
    for _ in 0..rng.below(3) {
        sizes.push(2 + rng.below(6) as usize);
    }
    sizes.push(c);
    let mut model = MlpModel::new(&sizes, rng).unwrap();
    // nonzero biases so every parameter is exercised
    let jittered = ParamVector(
        model
            .params()
            .as_slice()
            .iter()
            .map(|&v| v + 0.1 * rng.normal())
            .collect(),
    );
    model.set_params(jittered).unwrap();
    assert!(model.param_count() <= 200);
    let b = 1 + rng.below(5) as usize;
    (model, normal_matrix(b, d, 1.0, rng))
}

/// Full backprop through a random small MLP for `loss`.
pub fn backprop(loss: Loss, case: u64) -> f64 {
    let mut rng = Rng::new(4000 + case);
    let (model, x) = random_net(&mut rng);
    let t = targets(x.rows(), model.num_classes(), &mut rng);
    let cache = model.forward(&x).unwrap();
    let lv = eval(loss, cache.output(), &t);
    let grads = model
        .backward(&cache, lv.grad_predictions.as_ref().unwrap())
        .unwrap();
    (0..model.param_count())
        .map(|i| {
            let mut e_i = ParamVector::zeros(model.param_count());
            e_i.0[i] = 1.0;
            let fd = central_diff(
                |d| eval(loss, &model.perturb(&e_i, d).unwrap().predict(&x).unwrap(), &t).value,
                1e-6,
            );
            rel_err(grads.0[i], fd, FLOOR)
        })
        .fold(0.0, f64::max)
}
