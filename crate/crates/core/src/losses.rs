//! Scalar losses over batches of row-simplex predictions.
//!
//! Every loss is a batch mean (divided by the number of rows `b`) and returns
//! its analytic gradient with respect to the predictions `f`; the KL losses
//! also return the gradient with respect to the soft labels. Probabilities are
//! floored at [`PROB_FLOOR`] inside logarithms and divisions.

use thiserror::Error;

use crate::linalg::{DenseMatrix, Shape};

pub const PROB_FLOOR: f64 = 1e-12;
const SIMPLEX_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("{what} row {row} sums to {sum}, not 1")]
    NotSimplex {
        what: &'static str,
        row: usize,
        sum: f64,
    },
    #[error("shape mismatch: predictions {predictions} vs {other}")]
    Shape { predictions: Shape, other: Shape },
    #[error("label {label} at row {row} is out of range for {classes} classes")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        classes: usize,
    },
    #[error("loss is not finite")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad_predictions: Option<DenseMatrix>,
    pub grad_labels: Option<DenseMatrix>,
}

fn check_simplex(m: &DenseMatrix, what: &'static str) -> Result<(), LossError> {
    for (row, r) in m.row_iter().enumerate() {
        let sum: f64 = r.iter().sum();
        let off = (sum - 1.0).abs();
        if off.is_nan() || off > SIMPLEX_TOL {
            return Err(LossError::NotSimplex { what, row, sum });
        }
    }
    Ok(())
}

fn check_same_shape(f: &DenseMatrix, other: &DenseMatrix) -> Result<(), LossError> {
    if f.shape() != other.shape() {
        return Err(LossError::Shape {
            predictions: f.shape(),
            other: other.shape(),
        });
    }
    Ok(())
}

fn finite(value: f64) -> Result<f64, LossError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(LossError::NonFinite)
    }
}

#[inline]
fn floor(p: f64) -> f64 {
    p.max(PROB_FLOOR)
}

/// `KL(f || yhat)`, batch mean. The training-side classification loss.
pub fn kl_loss_v2(f: &DenseMatrix, yhat: &DenseMatrix) -> Result<LossValue, LossError> {
    check_same_shape(f, yhat)?;
    check_simplex(f, "predictions")?;
    check_simplex(yhat, "soft labels")?;
    let b = f.rows() as f64;
    let mut value = 0.0;
    let mut gf = DenseMatrix::zeros(f.rows(), f.cols());
    let mut gy = DenseMatrix::zeros(f.rows(), f.cols());
    for i in 0..f.rows() {
        for j in 0..f.cols() {
            let fj = floor(f.get(i, j));
            let yj = floor(yhat.get(i, j));
            let log_ratio = (fj / yj).ln();
            value += f.get(i, j) * log_ratio;
            gf.set(i, j, (1.0 + log_ratio) / b);
            gy.set(i, j, -fj / yj / b);
        }
    }
    Ok(LossValue {
        value: finite(value / b)?,
        grad_predictions: Some(gf),
        grad_labels: Some(gy),
    })
}

/// `KL(yhat || f)`, batch mean. Kept for comparison with [`kl_loss_v2`].
pub fn kl_loss_v1(f: &DenseMatrix, yhat: &DenseMatrix) -> Result<LossValue, LossError> {
    check_same_shape(f, yhat)?;
    check_simplex(f, "predictions")?;
    check_simplex(yhat, "soft labels")?;
    let b = f.rows() as f64;
    let mut value = 0.0;
    let mut gf = DenseMatrix::zeros(f.rows(), f.cols());
    let mut gy = DenseMatrix::zeros(f.rows(), f.cols());
    for i in 0..f.rows() {
        for j in 0..f.cols() {
            let fj = floor(f.get(i, j));
            let yj = floor(yhat.get(i, j));
            let log_ratio = (yj / fj).ln();
            value += yhat.get(i, j) * log_ratio;
            gf.set(i, j, -yj / fj / b);
            gy.set(i, j, (1.0 + log_ratio) / b);
        }
    }
    Ok(LossValue {
        value: finite(value / b)?,
        grad_predictions: Some(gf),
        grad_labels: Some(gy),
    })
}

/// Categorical cross entropy against hard labels.
pub fn cce_loss(f: &DenseMatrix, labels: &[usize]) -> Result<LossValue, LossError> {
    if labels.len() != f.rows() {
        return Err(LossError::Shape {
            predictions: f.shape(),
            other: Shape(labels.len(), 1),
        });
    }
    check_simplex(f, "predictions")?;
    let b = f.rows() as f64;
    let mut value = 0.0;
    let mut gf = DenseMatrix::zeros(f.rows(), f.cols());
    for (row, &label) in labels.iter().enumerate() {
        if label >= f.cols() {
            return Err(LossError::LabelOutOfRange {
                row,
                label,
                classes: f.cols(),
            });
        }
        let p = floor(f.get(row, label));
        value -= p.ln();
        gf.set(row, label, -1.0 / (b * p));
    }
    Ok(LossValue {
        value: finite(value / b)?,
        grad_predictions: Some(gf),
        grad_labels: None,
    })
}

/// Mean Shannon entropy of the prediction rows, with `0 log 0 = 0`.
pub fn entropy_loss(f: &DenseMatrix) -> Result<LossValue, LossError> {
    check_simplex(f, "predictions")?;
    let b = f.rows() as f64;
    let mut value = 0.0;
    let mut gf = DenseMatrix::zeros(f.rows(), f.cols());
    for i in 0..f.rows() {
        for j in 0..f.cols() {
            let p = f.get(i, j);
            if p > 0.0 {
                value -= p * p.ln();
            }
            gf.set(i, j, -(floor(p).ln() + 1.0) / b);
        }
    }
    Ok(LossValue {
        value: finite(value / b)?,
        grad_predictions: Some(gf),
        grad_labels: None,
    })
}

/// `KL(f || yhat) + entropy_weight * H(f)`: the parameter-update objective.
pub fn classification_objective(
    f: &DenseMatrix,
    yhat: &DenseMatrix,
    entropy_weight: f64,
) -> Result<LossValue, LossError> {
    let kl = kl_loss_v2(f, yhat)?;
    if entropy_weight == 0.0 {
        return Ok(kl);
    }
    let ent = entropy_loss(f)?;
    let grad_kl = kl.grad_predictions.expect("kl gradient");
    let grad_ent = ent.grad_predictions.expect("entropy gradient");
    let grad = grad_kl
        .add(&grad_ent.scale(entropy_weight))
        .expect("same shape");
    Ok(LossValue {
        value: finite(kl.value + entropy_weight * ent.value)?,
        grad_predictions: Some(grad),
        grad_labels: kl.grad_labels,
    })
}
