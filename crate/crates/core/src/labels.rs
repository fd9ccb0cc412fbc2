//! Trainable soft labels.
//!
//! Each training sample owns a row of unconstrained label logits `y^d`; its
//! soft label is `softmax(y^d)`. Rows start at `K * onehot(noisy label)`.
//! Gradients with respect to the soft label are pulled back through the
//! softmax Jacobian and applied to the logits, so every soft label stays a
//! valid distribution.

use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::linalg::{argmax, softmax, softmax_backward, DenseMatrix, Shape};

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("label {label} at sample {index} is out of range for {classes} classes")]
    OutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },
    #[error("unknown sample row {0}")]
    UnknownId(usize),
    #[error("gradient is {got}, expected {expected}")]
    Shape { expected: Shape, got: Shape },
    #[error("{0} sample ids for {1} rows")]
    IdCount(usize, usize),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt label snapshot: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabelStore {
    logits: DenseMatrix,
    k: f64,
    sample_ids: Vec<u64>,
}

impl SoftLabelStore {
    pub fn init_from_noisy(labels: &[usize], classes: usize, k: f64) -> Result<Self, LabelError> {
        let mut logits = DenseMatrix::zeros(labels.len(), classes);
        for (index, &label) in labels.iter().enumerate() {
            if label >= classes {
                return Err(LabelError::OutOfRange {
                    index,
                    label,
                    classes,
                });
            }
            logits.set(index, label, k);
        }
        Ok(Self {
            logits,
            k,
            sample_ids: (0..labels.len() as u64).collect(),
        })
    }

    /// Store over arbitrary logits `y^d`; `k` is recorded as metadata only.
    pub fn from_logits(logits: DenseMatrix, k: f64) -> Self {
        let n = logits.rows() as u64;
        Self {
            logits,
            k,
            sample_ids: (0..n).collect(),
        }
    }

    /// Attaches dataset ids to the rows (defaults to `0..N`).
    pub fn with_sample_ids(mut self, ids: Vec<u64>) -> Result<Self, LabelError> {
        if ids.len() != self.len() {
            return Err(LabelError::IdCount(ids.len(), self.len()));
        }
        self.sample_ids = ids;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.logits.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_classes(&self) -> usize {
        self.logits.cols()
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn sample_ids(&self) -> &[u64] {
        &self.sample_ids
    }

    pub fn logits(&self) -> &DenseMatrix {
        &self.logits
    }

    fn check_ids(&self, ids: &[usize]) -> Result<(), LabelError> {
        match ids.iter().find(|&&i| i >= self.len()) {
            Some(&bad) => Err(LabelError::UnknownId(bad)),
            None => Ok(()),
        }
    }

    pub fn soft_label(&self, row: usize) -> Vec<f64> {
        softmax(self.logits.row(row))
    }

    pub fn soft_labels(&self, batch_ids: &[usize]) -> Result<DenseMatrix, LabelError> {
        self.check_ids(batch_ids)?;
        let rows: Vec<Vec<f64>> = batch_ids.iter().map(|&i| self.soft_label(i)).collect();
        let mut out = DenseMatrix::zeros(rows.len(), self.num_classes());
        for (r, row) in rows.iter().enumerate() {
            out.row_mut(r).copy_from_slice(row);
        }
        Ok(out)
    }

    pub fn all_soft_labels(&self) -> DenseMatrix {
        let ids: Vec<usize> = (0..self.len()).collect();
        self.soft_labels(&ids).expect("all ids valid")
    }

    /// `argmax` of every soft label.
    pub fn hard_labels(&self) -> Vec<usize> {
        self.logits.row_iter().map(argmax).collect()
    }

    /// `y^d_i <- y^d_i - beta * J(yhat_i)^T grad_i` for each batch row.
    ///
    /// Rows whose gradient (or resulting update) is not finite are left
    /// untouched; the number of skipped rows is returned.
    pub fn apply_label_gradient(
        &mut self,
        batch_ids: &[usize],
        grad_wrt_yhat: &DenseMatrix,
        beta: f64,
    ) -> Result<usize, LabelError> {
        self.check_ids(batch_ids)?;
        let expected = Shape(batch_ids.len(), self.num_classes());
        if grad_wrt_yhat.shape() != expected {
            return Err(LabelError::Shape {
                expected,
                got: grad_wrt_yhat.shape(),
            });
        }
        let mut skipped = 0;
        for (r, &id) in batch_ids.iter().enumerate() {
            let grad = grad_wrt_yhat.row(r);
            let yhat = softmax(self.logits.row(id));
            let step = softmax_backward(&yhat, grad);
            if !step.iter().all(|v| (beta * v).is_finite()) {
                skipped += 1;
                continue;
            }
            for (l, s) in self.logits.row_mut(id).iter_mut().zip(&step) {
                *l -= beta * s;
            }
        }
        Ok(skipped)
    }

    pub fn save_snapshot(&self, path: &Path) -> Result<(), LabelError> {
        let mut w = io::BufWriter::new(std::fs::File::create(path)?);
        self.write_snapshot(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_snapshot(path: &Path) -> Result<Self, LabelError> {
        let mut r = io::BufReader::new(std::fs::File::open(path)?);
        Self::read_snapshot(&mut r)
    }

    /// Little-endian: magic `MSLGLABL`, version `u32`, `N` as `u64`, `C` as
    /// `u32`, `K` as `f64`, the `N x C` logits row-major as `f64`, then the
    /// `N` sample ids as `u64`.
    pub fn write_snapshot<W: Write>(&self, w: &mut W) -> Result<(), LabelError> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&(self.num_classes() as u32).to_le_bytes())?;
        w.write_all(&self.k.to_le_bytes())?;
        for v in self.logits.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
        for id in &self.sample_ids {
            w.write_all(&id.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(r: &mut R) -> Result<Self, LabelError> {
        let mut magic = [0u8; 8];
        fill(r, &mut magic, "header")?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(LabelError::Corrupt("bad magic".into()));
        }
        let version = u32::from_le_bytes(take(r, "header")?);
        if version != SNAPSHOT_VERSION {
            return Err(LabelError::Corrupt(format!("unsupported version {version}")));
        }
        let n = u64::from_le_bytes(take(r, "header")?);
        let c = u64::from(u32::from_le_bytes(take(r, "header")?));
        let k = f64::from_le_bytes(take(r, "header")?);
        let len = n.checked_mul(c).filter(|&len| c > 0 && len <= 1 << 34);
        let Some(len) = len.and_then(|len| usize::try_from(len).ok()) else {
            return Err(LabelError::Corrupt(format!("implausible size {n}x{c}")));
        };
        let (n, c) = (n as usize, c as usize);
        // Grow as data arrives so a lying header cannot force a huge allocation.
        let mut data = Vec::with_capacity(len.min(1 << 20));
        for _ in 0..len {
            data.push(f64::from_le_bytes(take(r, "logits")?));
        }
        let mut sample_ids = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            sample_ids.push(u64::from_le_bytes(take(r, "sample ids")?));
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(LabelError::Corrupt("trailing bytes".into()));
        }
        Ok(Self {
            logits: DenseMatrix::from_vec(n, c, data).expect("length checked"),
            k,
            sample_ids,
        })
    }

    /// CSV with header `sample_id,yhat_0,..,yhat_{C-1},argmax`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let header: Vec<String> = (0..self.num_classes()).map(|j| format!("yhat_{j}")).collect();
        writeln!(w, "sample_id,{},argmax", header.join(","))?;
        for (row, id) in self.sample_ids.iter().enumerate() {
            let yhat = self.soft_label(row);
            let cells: Vec<String> = yhat.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{id},{},{}", cells.join(","), argmax(&yhat))?;
        }
        Ok(())
    }
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"MSLGLABL";
const SNAPSHOT_VERSION: u32 = 1;

fn fill<R: Read>(r: &mut R, buf: &mut [u8], part: &str) -> Result<(), LabelError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => LabelError::Corrupt(format!("truncated {part}")),
        _ => LabelError::Io(e),
    })
}

fn take<const N: usize, R: Read>(r: &mut R, part: &str) -> Result<[u8; N], LabelError> {
    let mut b = [0u8; N];
    fill(r, &mut b, part)?;
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_k10_matches_direct_softmax() {
        let store = SoftLabelStore::init_from_noisy(&[2], 3, 10.0).unwrap();
        let y = store.soft_label(0);
        let z = 2.0 + 10f64.exp();
        assert!((y[0] - 1.0 / z).abs() < 1e-15);
        assert!((y[2] - 10f64.exp() / z).abs() < 1e-15);
        assert!((y[0] - 4.54e-5).abs() < 1e-7);
        assert!((y[2] - 0.99991).abs() < 1e-5);
    }

    #[test]
    fn k_zero_is_uniform_and_positive_k_keeps_argmax() {
        let labels = [0, 3, 1, 1, 2];
        let zero = SoftLabelStore::init_from_noisy(&labels, 4, 0.0).unwrap();
        assert!(zero.all_soft_labels().as_slice().iter().all(|&v| v == 0.25));
        let store = SoftLabelStore::init_from_noisy(&labels, 4, 0.3).unwrap();
        assert_eq!(store.hard_labels(), labels);
    }

    #[test]
    fn out_of_range_label_rejected() {
        assert!(matches!(
            SoftLabelStore::init_from_noisy(&[0, 3], 3, 10.0),
            Err(LabelError::OutOfRange { index: 1, label: 3, .. })
        ));
    }

    #[test]
    fn zero_and_constant_gradients_leave_store_unchanged() {
        let mut store = SoftLabelStore::init_from_noisy(&[0, 1, 2], 3, 10.0).unwrap();
        let before = store.clone();
        store
            .apply_label_gradient(&[0, 2], &DenseMatrix::zeros(2, 3), 5.0)
            .unwrap();
        assert_eq!(store, before);
        // uniform soft labels make J^T 1 exactly zero
        let mut flat = SoftLabelStore::init_from_noisy(&[0, 1], 2, 0.0).unwrap();
        let flat_before = flat.clone();
        let g = DenseMatrix::from_rows(&[[3.0, 3.0], [-1.5, -1.5]]);
        flat.apply_label_gradient(&[0, 1], &g, 7.0).unwrap();
        assert_eq!(flat, flat_before);
    }

    #[test]
    fn hand_case_update() {
        let mut store = SoftLabelStore::init_from_noisy(&[0], 2, 0.0).unwrap();
        store
            .apply_label_gradient(&[0], &DenseMatrix::from_rows(&[[1.0, 0.0]]), 1.0)
            .unwrap();
        assert_eq!(store.logits().row(0), &[-0.25, 0.25]);
    }

    #[test]
    fn non_finite_rows_are_skipped() {
        let mut store = SoftLabelStore::init_from_noisy(&[0, 1], 2, 1.0).unwrap();
        let before = store.clone();
        let g = DenseMatrix::from_rows(&[[f64::NAN, 0.0], [1.0, 0.0]]);
        let skipped = store.apply_label_gradient(&[0, 1], &g, 1.0).unwrap();
        assert_eq!(skipped, 1);
        assert_eq!(store.logits().row(0), before.logits().row(0));
        assert_ne!(store.logits().row(1), before.logits().row(1));
    }

    #[test]
    fn bad_ids_and_shapes() {
        let mut store = SoftLabelStore::init_from_noisy(&[0, 1], 2, 1.0).unwrap();
        assert!(matches!(store.soft_labels(&[2]), Err(LabelError::UnknownId(2))));
        assert!(matches!(
            store.apply_label_gradient(&[0], &DenseMatrix::zeros(2, 2), 1.0),
            Err(LabelError::Shape { .. })
        ));
    }

    #[test]
    fn snapshot_round_trip_and_truncation() {
        let mut store = SoftLabelStore::init_from_noisy(&[0, 2, 1], 3, 10.0)
            .unwrap()
            .with_sample_ids(vec![10, 20, 30])
            .unwrap();
        let g = DenseMatrix::from_rows(&[[0.1, -0.3, 0.7]]);
        store.apply_label_gradient(&[1], &g, 3.0).unwrap();
        let mut buf = Vec::new();
        store.write_snapshot(&mut buf).unwrap();
        let back = SoftLabelStore::read_snapshot(&mut buf.as_slice()).unwrap();
        assert_eq!(back, store);
        for cut in [4, 20, buf.len() - 1] {
            let err = SoftLabelStore::read_snapshot(&mut &buf[..cut]).unwrap_err();
            assert!(matches!(err, LabelError::Corrupt(ref m) if m.contains("truncated")), "{err}");
        }
    }

    #[test]
    fn csv_argmax_column_matches_noisy_labels() {
        let labels = [2, 0, 1, 1];
        let store = SoftLabelStore::init_from_noisy(&labels, 3, 10.0).unwrap();
        let mut buf = Vec::new();
        store.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("sample_id,yhat_0,yhat_1,yhat_2,argmax"));
        let argmaxes: Vec<usize> = lines
            .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
            .collect();
        assert_eq!(argmaxes, labels);
    }
}
