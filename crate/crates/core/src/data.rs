//! Labeled datasets with hidden ground truth, synthetic generators, label-noise
//! injectors and train/meta/test splitting.
//!
//! A [`LabeledDataset`] carries both the observed (possibly noisy) labels and
//! the true labels. Trainers only ever see a [`TrainingData`] view, which has
//! no access to the truth; evaluators and injectors use
//! [`LabeledDataset::true_labels`].

use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::linalg::{DenseMatrix, MathError};
use crate::model::{MlpModel, ModelError, SgdState};
use crate::rng::{streams, Rng};
use crate::trainer::{cce_epoch, TrainError};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid dataset parameters: {0}")]
    Invalid(String),
    #[error("noise ratio {0} must be in [0, 1)")]
    Ratio(f64),
    #[error("split fractions meta={meta} test={test} must be non-negative and sum below 1")]
    Fractions { meta: f64, test: f64 },
    #[error("probe classifier reached accuracy {accuracy:.4}, not above chance {chance:.4}; feature-dependent noise would be meaningless")]
    ProbeAtChance { accuracy: f64, chance: f64 },
    #[error("probe training failed: {0}")]
    Probe(Box<TrainError>),
    #[error("csv line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Math(#[from] MathError),
}

impl From<TrainError> for DataError {
    fn from(e: TrainError) -> Self {
        DataError::Probe(Box::new(e))
    }
}

impl From<ModelError> for DataError {
    fn from(e: ModelError) -> Self {
        DataError::Probe(Box::new(TrainError::Model(e)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Meta,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Meta => "meta",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "meta" => Ok(Split::Meta),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: DenseMatrix,
    noisy_labels: Vec<usize>,
    true_labels: Vec<usize>,
    ids: Vec<u64>,
    classes: usize,
    split: Split,
}

/// What a trainer is allowed to see: features and observed labels.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub features: &'a DenseMatrix,
    pub labels: &'a [usize],
}

impl<'a> TrainingData<'a> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl LabeledDataset {
    /// Clean dataset: observed labels equal the true labels.
    pub fn new(
        features: DenseMatrix,
        labels: Vec<usize>,
        classes: usize,
    ) -> Result<Self, DataError> {
        let ids = (0..labels.len() as u64).collect();
        Self::from_parts(features, labels.clone(), labels, ids, classes, Split::Train)
    }

    pub fn from_parts(
        features: DenseMatrix,
        noisy_labels: Vec<usize>,
        true_labels: Vec<usize>,
        ids: Vec<u64>,
        classes: usize,
        split: Split,
    ) -> Result<Self, DataError> {
        let n = features.rows();
        if noisy_labels.len() != n || true_labels.len() != n || ids.len() != n {
            return Err(DataError::Invalid(format!(
                "{n} feature rows but {} noisy labels, {} true labels, {} ids",
                noisy_labels.len(),
                true_labels.len(),
                ids.len()
            )));
        }
        if classes == 0 {
            return Err(DataError::Invalid("zero classes".into()));
        }
        if let Some(&bad) = noisy_labels.iter().chain(&true_labels).find(|&&l| l >= classes) {
            return Err(DataError::Invalid(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        Ok(Self {
            features,
            noisy_labels,
            true_labels,
            ids,
            classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.noisy_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noisy_labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn noisy_labels(&self) -> &[usize] {
        &self.noisy_labels
    }

    /// Ground truth. For evaluators and noise injectors only.
    pub fn true_labels(&self) -> &[usize] {
        &self.true_labels
    }

    pub fn training_data(&self) -> TrainingData<'_> {
        TrainingData {
            features: &self.features,
            labels: &self.noisy_labels,
        }
    }

    /// Indices whose observed label differs from the truth.
    pub fn corrupted(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.noisy_labels[i] != self.true_labels[i])
            .collect()
    }

    pub fn noise_rate(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.corrupted().len() as f64 / self.len() as f64
        }
    }

    fn subset(&self, idx: &[usize], split: Split) -> Self {
        let true_labels: Vec<usize> = idx.iter().map(|&i| self.true_labels[i]).collect();
        let noisy_labels = match split {
            // held-out splits are clean by construction
            Split::Meta | Split::Test => true_labels.clone(),
            Split::Train => idx.iter().map(|&i| self.noisy_labels[i]).collect(),
        };
        Self {
            features: self.features.select_rows(idx),
            noisy_labels,
            true_labels,
            ids: idx.iter().map(|&i| self.ids[i]).collect(),
            classes: self.classes,
            split,
        }
    }

    fn with_noisy(&self, noisy_labels: Vec<usize>) -> Self {
        Self {
            noisy_labels,
            ..self.clone()
        }
    }
}

/// Gaussian blobs with unit variance.
///
/// Class `c` is sample `i` with `i % C == c`, so class counts differ by at most
/// one. Centers: if `D >= C`, `separation / sqrt(2) * e_c`, making every pair
/// exactly `separation` apart; otherwise, for `D >= 2`, the vertices of a
/// regular `C`-gon in the first two coordinates with side `separation`
/// (adjacent classes are `separation` apart, the rest further); for `D = 1`,
/// points `c * separation` on the line.
pub fn gen_blobs(
    n: usize,
    classes: usize,
    dim: usize,
    separation: f64,
    rng: &mut Rng,
) -> Result<LabeledDataset, DataError> {
    if classes == 0 || dim == 0 || n < classes {
        return Err(DataError::Invalid(format!(
            "blobs need n >= C >= 1 and D >= 1 (n={n}, C={classes}, D={dim})"
        )));
    }
    if !(separation.is_finite() && separation >= 0.0) {
        return Err(DataError::Invalid(format!("separation {separation}")));
    }
    let centers = blob_centers(classes, dim, separation);
    let mut features = DenseMatrix::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        for (d, center) in centers[c].iter().enumerate() {
            features.set(i, d, center + rng.normal());
        }
        labels.push(c);
    }
    LabeledDataset::new(features, labels, classes)
}

pub fn blob_centers(classes: usize, dim: usize, separation: f64) -> Vec<Vec<f64>> {
    (0..classes)
        .map(|c| {
            let mut center = vec![0.0; dim];
            if dim >= classes {
                center[c] = separation / std::f64::consts::SQRT_2;
            } else if dim >= 2 {
                let radius = if classes == 1 {
                    0.0
                } else {
                    separation / (2.0 * (std::f64::consts::PI / classes as f64).sin())
                };
                let angle = std::f64::consts::TAU * c as f64 / classes as f64;
                center[0] = radius * angle.cos();
                center[1] = radius * angle.sin();
            } else {
                center[0] = c as f64 * separation;
            }
            center
        })
        .collect()
}

/// Interleaved 2-D spirals.
///
/// Sample `i` belongs to class `c = i % C` and is the `k = i / C`-th of the
/// `n_c` points of that class. With `t = (k + 0.5) / n_c`, the point is
/// `t * (cos phi, sin phi) + noise_sd * (z1, z2)` where
/// `phi = 2 pi c / C + 4 t` and `z1, z2` are standard normal draws.
pub fn gen_spirals(
    n: usize,
    classes: usize,
    noise_sd: f64,
    rng: &mut Rng,
) -> Result<LabeledDataset, DataError> {
    if classes == 0 || n < classes {
        return Err(DataError::Invalid(format!(
            "spirals need n >= C >= 1 (n={n}, C={classes})"
        )));
    }
    if !(noise_sd.is_finite() && noise_sd >= 0.0) {
        return Err(DataError::Invalid(format!("noise_sd {noise_sd}")));
    }
    let mut features = DenseMatrix::zeros(n, 2);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % classes;
        let k = i / classes;
        let n_c = n / classes + usize::from(c < n % classes);
        let t = (k as f64 + 0.5) / n_c as f64;
        let phi = std::f64::consts::TAU * c as f64 / classes as f64 + 4.0 * t;
        features.set(i, 0, t * phi.cos() + noise_sd * rng.normal());
        features.set(i, 1, t * phi.sin() + noise_sd * rng.normal());
        labels.push(c);
    }
    LabeledDataset::new(features, labels, classes)
}

/// Three disjoint clean parts. Meta and test take the first
/// `round(meta_fraction * N)` and next `round(test_fraction * N)` indices of a
/// seeded permutation; the rest is the training split.
pub fn split(
    ds: &LabeledDataset,
    meta_fraction: f64,
    test_fraction: f64,
    rng: &mut Rng,
) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset), DataError> {
    let valid = |f: f64| f.is_finite() && f >= 0.0;
    if !(valid(meta_fraction) && valid(test_fraction) && meta_fraction + test_fraction < 1.0) {
        return Err(DataError::Fractions {
            meta: meta_fraction,
            test: test_fraction,
        });
    }
    let n = ds.len();
    let n_meta = (meta_fraction * n as f64).round() as usize;
    let n_test = (test_fraction * n as f64).round() as usize;
    if n_meta + n_test >= n {
        return Err(DataError::Fractions {
            meta: meta_fraction,
            test: test_fraction,
        });
    }
    let perm = rng.permutation(n);
    let meta = ds.subset(&perm[..n_meta], Split::Meta);
    let test = ds.subset(&perm[n_meta..n_meta + n_test], Split::Test);
    let train = ds.subset(&perm[n_meta + n_test..], Split::Train);
    Ok((train, meta, test))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    Uniform,
    FeatureDependent,
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseKind::Uniform => "uniform",
            NoiseKind::FeatureDependent => "feature_dependent",
        })
    }
}

impl FromStr for NoiseKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(NoiseKind::Uniform),
            "feature_dependent" | "feature-dependent" | "featdep" => {
                Ok(NoiseKind::FeatureDependent)
            }
            other => Err(format!("unknown noise kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub ratio: f64,
    pub seed: u64,
}

/// Which samples an injector corrupted.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseReport {
    /// Sorted indices of flipped samples.
    pub flipped: Vec<usize>,
    /// Probe margin per sample (feature-dependent noise only).
    pub margins: Option<Vec<f64>>,
}

fn check_ratio(ratio: f64) -> Result<(), DataError> {
    if ratio.is_finite() && (0.0..1.0).contains(&ratio) {
        Ok(())
    } else {
        Err(DataError::Ratio(ratio))
    }
}

fn flip_count(ratio: f64, n: usize) -> usize {
    (ratio * n as f64).round() as usize
}

/// Flips exactly `round(ratio * N)` samples, chosen without replacement, each
/// to a uniformly drawn class other than its true one.
pub fn inject_uniform(
    ds: &LabeledDataset,
    ratio: f64,
    rng: &mut Rng,
) -> Result<(LabeledDataset, NoiseReport), DataError> {
    check_ratio(ratio)?;
    let k = flip_count(ratio, ds.len());
    if k > 0 && ds.classes < 2 {
        return Err(DataError::Invalid("cannot flip labels with one class".into()));
    }
    let perm = rng.permutation(ds.len());
    let mut flipped = perm[..k].to_vec();
    flipped.sort_unstable();
    let mut noisy = ds.true_labels.clone();
    for &i in &flipped {
        let y = ds.true_labels[i];
        let r = rng.below(ds.classes as u64 - 1) as usize;
        noisy[i] = if r < y { r } else { r + 1 };
    }
    Ok((
        ds.with_noisy(noisy),
        NoiseReport {
            flipped,
            margins: None,
        },
    ))
}

/// Classifier used to rank samples for feature-dependent noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32],
            epochs: 30,
            lr: 0.05,
            momentum: 0.9,
            batch_size: 32,
        }
    }
}

/// Trains a probe on the clean labels, scores each sample by
/// `p(true class) - max_{c != true} p(c)`, and flips the `round(ratio * N)`
/// lowest-scoring samples (ties by index) to `argmax_{c != true} p(c)`.
///
/// For samples the probe classifies correctly the score is the top-1/top-2
/// margin and the new label is the runner-up class.
pub fn inject_feature_dependent(
    ds: &LabeledDataset,
    ratio: f64,
    probe: &ProbeConfig,
    rng: &mut Rng,
) -> Result<(LabeledDataset, NoiseReport), DataError> {
    check_ratio(ratio)?;
    let k = flip_count(ratio, ds.len());
    if k == 0 {
        return Ok((
            ds.clone(),
            NoiseReport {
                flipped: Vec::new(),
                margins: None,
            },
        ));
    }
    if ds.classes < 2 {
        return Err(DataError::Invalid("cannot flip labels with one class".into()));
    }
    let probs = train_probe(ds, probe, rng.next_u64())?;

    let predicted = probs.argmax_rows();
    let correct = predicted
        .iter()
        .zip(&ds.true_labels)
        .filter(|(p, y)| p == y)
        .count();
    let accuracy = correct as f64 / ds.len() as f64;
    let chance = 1.0 / ds.classes as f64;
    // three binomial standard deviations above chance
    let threshold = chance + 3.0 * (chance * (1.0 - chance) / ds.len() as f64).sqrt();
    if accuracy <= threshold {
        return Err(DataError::ProbeAtChance { accuracy, chance });
    }

    let mut margins = Vec::with_capacity(ds.len());
    let mut counter = Vec::with_capacity(ds.len());
    for (row, &y) in probs.row_iter().zip(&ds.true_labels) {
        let (best_other, p_other) = row
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != y)
            .fold((usize::MAX, f64::NEG_INFINITY), |acc, (c, &p)| {
                if p > acc.1 {
                    (c, p)
                } else {
                    acc
                }
            });
        margins.push(row[y] - p_other);
        counter.push(best_other);
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.sort_by(|&a, &b| margins[a].total_cmp(&margins[b]).then(a.cmp(&b)));
    let mut flipped = order[..k].to_vec();
    flipped.sort_unstable();
    let mut noisy = ds.true_labels.clone();
    for &i in &flipped {
        noisy[i] = counter[i];
    }
    Ok((
        ds.with_noisy(noisy),
        NoiseReport {
            flipped,
            margins: Some(margins),
        },
    ))
}

fn train_probe(ds: &LabeledDataset, cfg: &ProbeConfig, seed: u64) -> Result<DenseMatrix, DataError> {
    let mut sizes = vec![ds.dim()];
    sizes.extend(&cfg.hidden);
    sizes.push(ds.classes);
    let mut model = MlpModel::new(&sizes, &mut Rng::with_stream(seed, streams::MODEL_INIT))?;
    let mut opt = SgdState::new(model.param_count(), cfg.lr, cfg.momentum, 0.0);
    let mut batches = Rng::with_stream(seed, streams::PROBE);
    let data = TrainingData {
        features: &ds.features,
        labels: &ds.true_labels,
    };
    for _ in 0..cfg.epochs {
        cce_epoch(&mut model, &mut opt, data, cfg.batch_size, &mut batches)?;
    }
    Ok(model.predict(&ds.features)?)
}

/// Applies `spec` to a clean training split.
pub fn inject(
    ds: &LabeledDataset,
    spec: &NoiseSpec,
    probe: &ProbeConfig,
) -> Result<(LabeledDataset, NoiseReport), DataError> {
    let mut rng = Rng::with_stream(spec.seed, streams::NOISE);
    match spec.kind {
        NoiseKind::Uniform => inject_uniform(ds, spec.ratio, &mut rng),
        NoiseKind::FeatureDependent => inject_feature_dependent(ds, spec.ratio, probe, &mut rng),
    }
}

/// Train, meta and test splits of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub train: LabeledDataset,
    pub meta: LabeledDataset,
    pub test: LabeledDataset,
}

impl DatasetBundle {
    pub fn classes(&self) -> usize {
        self.train.classes
    }

    pub fn dim(&self) -> usize {
        self.train.dim()
    }

    /// CSV with header `id,x0..x{D-1},true_label,noisy_label,split`; rows are
    /// train, then meta, then test, each in split order. Floats use Rust's
    /// shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let dim = self.dim();
        let cols: Vec<String> = (0..dim).map(|d| format!("x{d}")).collect();
        writeln!(w, "id,{},true_label,noisy_label,split", cols.join(","))?;
        for ds in [&self.train, &self.meta, &self.test] {
            for i in 0..ds.len() {
                write!(w, "{}", ds.ids[i])?;
                for v in ds.features.row(i) {
                    write!(w, ",{v}")?;
                }
                writeln!(
                    w,
                    ",{},{},{}",
                    ds.true_labels[i], ds.noisy_labels[i], ds.split
                )?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, classes: usize) -> Result<Self, DataError> {
        let csv_err = |line: usize, msg: String| DataError::Csv { line, msg };
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| csv_err(1, "empty file".into()))??;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 5
            || cols[0] != "id"
            || cols[cols.len() - 3..] != ["true_label", "noisy_label", "split"]
        {
            return Err(csv_err(1, format!("unexpected header `{header}`")));
        }
        let dim = cols.len() - 4;
        // Per split: features, true labels, noisy labels, ids.
        type Columns = (Vec<f64>, Vec<usize>, Vec<usize>, Vec<u64>);
        let mut parts: [Columns; 3] = Default::default();
        for (n, line) in lines.enumerate() {
            let line_no = n + 2;
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != dim + 4 {
                return Err(csv_err(line_no, format!("{} cells, expected {}", cells.len(), dim + 4)));
            }
            let split: Split = cells[dim + 3].parse().map_err(|e| csv_err(line_no, e))?;
            let part = &mut parts[split as usize];
            part.3.push(cells[0].parse().map_err(|e| csv_err(line_no, format!("id: {e}")))?);
            for cell in &cells[1..=dim] {
                part.0
                    .push(cell.parse().map_err(|e| csv_err(line_no, format!("feature: {e}")))?);
            }
            let label = |s: &str| -> Result<usize, DataError> {
                s.parse().map_err(|e| csv_err(line_no, format!("label: {e}")))
            };
            part.1.push(label(cells[dim + 1])?);
            part.2.push(label(cells[dim + 2])?);
        }
        let [train, meta, test] = parts;
        let build = |(x, truth, noisy, ids): (Vec<f64>, Vec<usize>, Vec<usize>, Vec<u64>),
                     split: Split| {
            let rows = ids.len();
            LabeledDataset::from_parts(
                DenseMatrix::from_vec(rows, dim, x)?,
                noisy,
                truth,
                ids,
                classes,
                split,
            )
        };
        Ok(Self {
            train: build(train, Split::Train)?,
            meta: build(meta, Split::Meta)?,
            test: build(test, Split::Test)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_are_balanced_and_deterministic() {
        let a = gen_blobs(103, 4, 2, 6.0, &mut Rng::new(1)).unwrap();
        let b = gen_blobs(103, 4, 2, 6.0, &mut Rng::new(1)).unwrap();
        assert_eq!(a, b);
        let mut counts = [0usize; 4];
        for &l in a.true_labels() {
            counts[l] += 1;
        }
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        assert!(gen_blobs(3, 4, 2, 1.0, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn blob_centers_have_requested_spacing() {
        let dist = |a: &[f64], b: &[f64]| {
            a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
        };
        let c = blob_centers(3, 5, 4.0);
        for i in 0..3 {
            for j in 0..i {
                assert!((dist(&c[i], &c[j]) - 4.0).abs() < 1e-12);
            }
        }
        let sq = blob_centers(4, 2, 6.0);
        assert!((dist(&sq[0], &sq[1]) - 6.0).abs() < 1e-12);
        assert!((dist(&sq[0], &sq[2]) - 6.0 * 2f64.sqrt()).abs() < 1e-12);
        let tri = blob_centers(3, 2, 2.5);
        assert!((dist(&tri[1], &tri[2]) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn spirals_degenerate_and_deterministic() {
        let a = gen_spirals(3, 3, 0.0, &mut Rng::new(2)).unwrap();
        assert_eq!(a.true_labels(), &[0, 1, 2]);
        for i in 0..3 {
            let r = a.features().row(i);
            assert!(((r[0] * r[0] + r[1] * r[1]).sqrt() - 0.5).abs() < 1e-12);
        }
        let b = gen_spirals(50, 3, 0.1, &mut Rng::new(9)).unwrap();
        assert_eq!(b, gen_spirals(50, 3, 0.1, &mut Rng::new(9)).unwrap());
        assert!(gen_spirals(2, 3, 0.1, &mut Rng::new(9)).is_err());
    }

    #[test]
    fn split_is_disjoint_complete_and_clean() {
        let ds = gen_blobs(500, 3, 2, 4.0, &mut Rng::new(3)).unwrap();
        let (train, meta, test) = split(&ds, 0.02, 0.2, &mut Rng::new(4)).unwrap();
        assert_eq!((meta.len(), test.len(), train.len()), (10, 100, 390));
        let mut all: Vec<u64> = [&train, &meta, &test]
            .iter()
            .flat_map(|d| d.ids().to_vec())
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..500).collect::<Vec<_>>());
        assert_eq!(meta.noisy_labels(), meta.true_labels());
        assert_eq!(meta.split(), Split::Meta);
        assert!(split(&ds, 0.6, 0.5, &mut Rng::new(4)).is_err());
        assert!(split(&ds, -0.1, 0.5, &mut Rng::new(4)).is_err());
    }

    #[test]
    fn meta_size_for_two_percent_of_fifty_thousand() {
        let ds = LabeledDataset::new(DenseMatrix::zeros(50_000, 1), vec![0; 50_000], 1).unwrap();
        let (_, meta, _) = split(&ds, 0.02, 0.0, &mut Rng::new(0)).unwrap();
        assert_eq!(meta.len(), 1000);
    }

    #[test]
    fn uniform_noise_exact_count() {
        let ds = gen_blobs(1000, 4, 2, 3.0, &mut Rng::new(5)).unwrap();
        let (zero, rep) = inject_uniform(&ds, 0.0, &mut Rng::new(6)).unwrap();
        assert_eq!(zero.noisy_labels(), ds.true_labels());
        assert!(rep.flipped.is_empty());
        let (noisy, rep) = inject_uniform(&ds, 0.4, &mut Rng::new(6)).unwrap();
        assert_eq!(noisy.corrupted().len(), 400);
        assert_eq!(noisy.corrupted(), rep.flipped);
        assert_eq!(noisy.true_labels(), ds.true_labels());
        assert!(matches!(inject_uniform(&ds, 1.0, &mut Rng::new(6)), Err(DataError::Ratio(_))));
    }

    #[test]
    fn feature_dependent_targets_low_margin_runner_up() {
        let ds = gen_blobs(400, 3, 2, 3.0, &mut Rng::new(7)).unwrap();
        let (noisy, rep) =
            inject_feature_dependent(&ds, 0.3, &ProbeConfig::default(), &mut Rng::new(8)).unwrap();
        assert_eq!(noisy.corrupted().len(), 120);
        assert_eq!(noisy.corrupted(), rep.flipped);
        let margins = rep.margins.unwrap();
        let flipped: std::collections::HashSet<usize> = rep.flipped.iter().copied().collect();
        let (mut fm, mut fc, mut km, mut kc) = (0.0, 0, 0.0, 0);
        for (i, m) in margins.iter().enumerate() {
            if flipped.contains(&i) {
                fm += m;
                fc += 1;
            } else {
                km += m;
                kc += 1;
            }
        }
        assert!(fm / (fc as f64) < km / (kc as f64));
        let max_flipped = rep.flipped.iter().map(|&i| margins[i]).fold(f64::MIN, f64::max);
        let min_kept = (0..ds.len())
            .filter(|i| !flipped.contains(i))
            .map(|i| margins[i])
            .fold(f64::MAX, f64::min);
        assert!(max_flipped <= min_kept);
    }

    #[test]
    fn feature_dependent_flips_to_runner_up_when_probe_is_right() {
        let ds = gen_blobs(300, 4, 2, 3.0, &mut Rng::new(9)).unwrap();
        let cfg = ProbeConfig::default();
        let mut rng = Rng::new(10);
        let probs = train_probe(&ds, &cfg, Rng::new(10).next_u64()).unwrap();
        let (noisy, rep) = inject_feature_dependent(&ds, 0.4, &cfg, &mut rng).unwrap();
        let mut checked = 0;
        for &i in &rep.flipped {
            let row = probs.row(i);
            let mut order: Vec<usize> = (0..4).collect();
            order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
            if order[0] == ds.true_labels()[i] {
                assert_eq!(noisy.noisy_labels()[i], order[1], "sample {i}");
                checked += 1;
            } else {
                assert_eq!(noisy.noisy_labels()[i], order[0], "sample {i}");
            }
        }
        assert!(checked > rep.flipped.len() / 2);
    }

    #[test]
    fn feature_dependent_refuses_uninformative_probe() {
        let labels: Vec<usize> = (0..200).map(|i| i % 4).collect();
        let ds = LabeledDataset::new(DenseMatrix::zeros(200, 2), labels, 4).unwrap();
        let err = inject_feature_dependent(&ds, 0.2, &ProbeConfig::default(), &mut Rng::new(1))
            .unwrap_err();
        assert!(matches!(err, DataError::ProbeAtChance { .. }), "{err}");
        let (same, _) =
            inject_feature_dependent(&ds, 0.0, &ProbeConfig::default(), &mut Rng::new(1)).unwrap();
        assert_eq!(same, ds);
    }

    #[test]
    fn csv_round_trip() {
        let ds = gen_blobs(60, 3, 2, 2.0, &mut Rng::new(11)).unwrap();
        let (train, meta, test) = split(&ds, 0.1, 0.2, &mut Rng::new(12)).unwrap();
        let (train, _) = inject_uniform(&train, 0.5, &mut Rng::new(13)).unwrap();
        let bundle = DatasetBundle { train, meta, test };
        let mut buf = Vec::new();
        bundle.write_csv(&mut buf).unwrap();
        let back = DatasetBundle::read_csv(buf.as_slice(), 3).unwrap();
        assert_eq!(back, bundle);
        let bad = b"id,x0,true_label,noisy_label,split\n0,1.0,0,0,elsewhere\n";
        assert!(matches!(
            DatasetBundle::read_csv(&bad[..], 3),
            Err(DataError::Csv { line: 2, .. })
        ));
    }
}
