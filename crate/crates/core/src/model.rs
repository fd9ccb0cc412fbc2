//! Fully connected classifier with ReLU hidden layers and a softmax output.
//!
//! Parameters live in one flat [`ParamVector`]. Layout: the weight matrix of
//! every layer in order (each `n_in x n_out`, row-major), followed by the bias
//! vector of every layer in order. A layer computes `a W + b`.

use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::linalg::{self, softmax_backward, DenseMatrix, MathError, Shape};
use crate::rng::Rng;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model needs at least an input and an output layer, got {0:?}")]
    Topology(Vec<usize>),
    #[error("input has {got} features, model expects {expected}")]
    InputShape { expected: usize, got: usize },
    #[error("upstream gradient is {got}, forward output was {expected}")]
    UpstreamShape { expected: Shape, got: Shape },
    #[error("forward cache is stale (cache revision {cache}, model revision {model})")]
    StaleCache { cache: u64, model: u64 },
    #[error("parameter vector has length {got}, model has {expected} parameters")]
    ParamLength { expected: usize, got: usize },
    #[error("non-finite gradient entry at parameter {index}: {value}")]
    NonFiniteGradient { index: usize, value: f64 },
    #[error(transparent)]
    Math(#[from] MathError),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a model checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

/// Flat parameter (or gradient) vector in the model's documented layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &Self) -> f64 {
        linalg::dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.iter().map(|v| v * s).collect())
    }

    pub fn axpy(&mut self, a: f64, x: &Self) {
        for (y, x) in self.0.iter_mut().zip(&x.0) {
            *y += a * x;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    params: ParamVector,
    revision: u64,
}

/// Activations recorded by [`MlpModel::forward`] for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    revision: u64,
    // inputs to each layer; [0] is the batch itself
    layer_inputs: Vec<DenseMatrix>,
    output: DenseMatrix,
}

impl ForwardCache {
    pub fn output(&self) -> &DenseMatrix {
        &self.output
    }
}

pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

impl MlpModel {
    /// He-uniform weights (`U(-sqrt(6/n_in), sqrt(6/n_in))`), zero biases.
    pub fn new(layer_sizes: &[usize], rng: &mut Rng) -> Result<Self, ModelError> {
        let mut model = Self::zeros(layer_sizes)?;
        let mut offset = 0;
        for w in layer_sizes.windows(2) {
            let limit = (6.0 / w[0] as f64).sqrt();
            for v in &mut model.params.0[offset..offset + w[0] * w[1]] {
                *v = rng.uniform_range(-limit, limit);
            }
            offset += w[0] * w[1];
        }
        Ok(model)
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self, ModelError> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(ModelError::Topology(layer_sizes.to_vec()));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            params: ParamVector::zeros(param_count(layer_sizes)),
            revision: 0,
        })
    }

    pub fn from_params(layer_sizes: &[usize], params: ParamVector) -> Result<Self, ModelError> {
        let mut model = Self::zeros(layer_sizes)?;
        model.set_params(params)?;
        Ok(model)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_sizes.last().expect("non-empty topology")
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    /// Replaces the whole parameter vector ("unflatten").
    pub fn set_params(&mut self, params: ParamVector) -> Result<(), ModelError> {
        if params.len() != self.params.len() {
            return Err(ModelError::ParamLength {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        self.params = params;
        self.revision += 1;
        Ok(())
    }

    fn weight_offset(&self, layer: usize) -> usize {
        self.layer_sizes[..layer + 1]
            .windows(2)
            .map(|w| w[0] * w[1])
            .sum()
    }

    fn bias_offset(&self, layer: usize) -> usize {
        let weights: usize = self.layer_sizes.windows(2).map(|w| w[0] * w[1]).sum();
        weights + self.layer_sizes[1..=layer].iter().sum::<usize>()
    }

    /// Weights of `layer` as a row-major `n_in x n_out` slice.
    pub fn weights(&self, layer: usize) -> &[f64] {
        let off = self.weight_offset(layer);
        &self.params.0[off..off + self.layer_sizes[layer] * self.layer_sizes[layer + 1]]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        let off = self.bias_offset(layer);
        &self.params.0[off..off + self.layer_sizes[layer + 1]]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        let off = self.weight_offset(layer);
        let n = self.layer_sizes[layer] * self.layer_sizes[layer + 1];
        self.revision += 1;
        &mut self.params.0[off..off + n]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut [f64] {
        let off = self.bias_offset(layer);
        let n = self.layer_sizes[layer + 1];
        self.revision += 1;
        &mut self.params.0[off..off + n]
    }

    fn check_input(&self, x: &DenseMatrix) -> Result<(), ModelError> {
        if x.cols() != self.input_dim() {
            return Err(ModelError::InputShape {
                expected: self.input_dim(),
                got: x.cols(),
            });
        }
        Ok(())
    }

    /// Row-wise class probabilities for a `b x D` batch.
    pub fn forward(&self, x: &DenseMatrix) -> Result<ForwardCache, ModelError> {
        self.check_input(x)?;
        let rows = x.rows();
        let mut layer_inputs = Vec::with_capacity(self.num_layers());
        let mut a = x.clone();
        for l in 0..self.num_layers() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let mut z = linalg::gemm(a.as_slice(), rows, n_in, self.weights(l), n_out);
            let bias = self.biases(l);
            for row in z.chunks_exact_mut(n_out) {
                for (v, b) in row.iter_mut().zip(bias) {
                    *v += b;
                }
            }
            let last = l + 1 == self.num_layers();
            for row in z.chunks_exact_mut(n_out) {
                if last {
                    linalg::softmax_in_place(row);
                } else {
                    for v in row.iter_mut() {
                        *v = v.max(0.0);
                    }
                }
            }
            layer_inputs.push(a);
            a = DenseMatrix::from_vec(rows, n_out, z)?;
        }
        if !a.is_finite() {
            return Err(MathError::NonFinite("forward").into());
        }
        Ok(ForwardCache {
            revision: self.revision,
            layer_inputs,
            output: a,
        })
    }

    pub fn predict(&self, x: &DenseMatrix) -> Result<DenseMatrix, ModelError> {
        Ok(self.forward(x)?.output)
    }

    /// Parameter gradient of the scalar loss whose gradient with respect to
    /// the output probabilities is `dl_df`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        dl_df: &DenseMatrix,
    ) -> Result<ParamVector, ModelError> {
        if cache.revision != self.revision {
            return Err(ModelError::StaleCache {
                cache: cache.revision,
                model: self.revision,
            });
        }
        if dl_df.shape() != cache.output.shape() {
            return Err(ModelError::UpstreamShape {
                expected: cache.output.shape(),
                got: dl_df.shape(),
            });
        }
        let rows = dl_df.rows();
        let mut grads = ParamVector::zeros(self.param_count());

        // gradient with respect to the output logits
        let mut delta: Vec<f64> = Vec::with_capacity(rows * self.num_classes());
        for (s, u) in cache.output.row_iter().zip(dl_df.row_iter()) {
            delta.extend(softmax_backward(s, u));
        }

        for l in (0..self.num_layers()).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let input = &cache.layer_inputs[l];
            let gw = linalg::gemm_tn(input.as_slice(), rows, n_in, &delta, n_out);
            let w_off = self.weight_offset(l);
            grads.0[w_off..w_off + n_in * n_out].copy_from_slice(&gw);
            let b_off = self.bias_offset(l);
            let gb = &mut grads.0[b_off..b_off + n_out];
            for row in delta.chunks_exact(n_out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l > 0 {
                let mut next = linalg::gemm_nt(&delta, rows, n_out, self.weights(l), n_in);
                // ReLU mask: the layer input is the post-activation of layer l-1
                for (d, a) in next.iter_mut().zip(input.as_slice()) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
                delta = next;
            }
        }
        Ok(grads)
    }

    /// Copy of the model at `theta + eps * direction`.
    pub fn perturb(&self, direction: &ParamVector, eps: f64) -> Result<Self, ModelError> {
        if direction.len() != self.param_count() {
            return Err(ModelError::ParamLength {
                expected: self.param_count(),
                got: direction.len(),
            });
        }
        let mut out = self.clone();
        out.params.axpy(eps, direction);
        out.revision += 1;
        Ok(out)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<(), CheckpointError> {
        let mut file = io::BufWriter::new(std::fs::File::create(path)?);
        self.write_checkpoint(&mut file)?;
        file.flush()?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self, CheckpointError> {
        let mut file = io::BufReader::new(std::fs::File::open(path)?);
        Self::read_checkpoint(&mut file)
    }

    /// Little-endian: magic `MSLGMODL`, version `u32`, layer count `u32`,
    /// one `u32` per layer size, parameter count `u64`, then the parameters
    /// as `f64` in flatten order.
    pub fn write_checkpoint<W: Write>(&self, w: &mut W) -> Result<(), CheckpointError> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.layer_sizes.len() as u32).to_le_bytes())?;
        for &n in &self.layer_sizes {
            w.write_all(&(n as u32).to_le_bytes())?;
        }
        w.write_all(&(self.param_count() as u64).to_le_bytes())?;
        for v in &self.params.0 {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 8];
        read_exact(r, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = read_u32(r)?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let n_sizes = read_u32(r)? as usize;
        if !(2..=64).contains(&n_sizes) {
            return Err(CheckpointError::Corrupt(format!("{n_sizes} layer sizes")));
        }
        let sizes = (0..n_sizes)
            .map(|_| read_u32(r).map(|v| v as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n_params = read_u64(r)? as usize;
        let mut model =
            Self::zeros(&sizes).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        if n_params != model.param_count() {
            return Err(CheckpointError::Corrupt(format!(
                "{n_params} parameters for topology {sizes:?}"
            )));
        }
        for v in model.params.0.iter_mut() {
            *v = read_f64(r)?;
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(CheckpointError::Corrupt("trailing bytes".into()));
        }
        Ok(model)
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"MSLGMODL";
const CHECKPOINT_VERSION: u32 = 1;

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), CheckpointError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => CheckpointError::Truncated,
        _ => CheckpointError::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, CheckpointError> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, CheckpointError> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// SGD with momentum and L2 weight decay:
/// `v <- momentum * v + (g + weight_decay * theta)`, then `theta <- theta - lr * v`.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    pub velocity: ParamVector,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl SgdState {
    pub fn new(param_count: usize, lr: f64, momentum: f64, weight_decay: f64) -> Self {
        Self {
            velocity: ParamVector::zeros(param_count),
            lr,
            momentum,
            weight_decay,
        }
    }

    /// Momentum-free, decay-free state: one step is `theta - lr * g`.
    pub fn plain(param_count: usize, lr: f64) -> Self {
        Self::new(param_count, lr, 0.0, 0.0)
    }
}

pub fn check_finite(grads: &ParamVector) -> Result<(), ModelError> {
    match grads.0.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(ModelError::NonFiniteGradient {
            index,
            value: grads.0[index],
        }),
        None => Ok(()),
    }
}

pub fn sgd_step(
    model: &mut MlpModel,
    grads: &ParamVector,
    opt: &mut SgdState,
) -> Result<(), ModelError> {
    let n = model.param_count();
    if grads.len() != n || opt.velocity.len() != n {
        return Err(ModelError::ParamLength {
            expected: n,
            got: if grads.len() != n { grads.len() } else { opt.velocity.len() },
        });
    }
    check_finite(grads)?;
    let params = &mut model.params.0;
    for ((theta, v), g) in params.iter_mut().zip(opt.velocity.0.iter_mut()).zip(&grads.0) {
        *v = opt.momentum * *v + (g + opt.weight_decay * *theta);
        *theta -= opt.lr * *v;
    }
    model.revision += 1;
    Ok(())
}
