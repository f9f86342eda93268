//! A small fully-connected regression network, written out explicitly:
//! ReLU hidden layers, linear output, inverted dropout, analytic
//! backpropagation and an Adam optimiser.
//!
//! The loss is the squared error summed over output units (and over batch
//! rows for batched calls), so the gradient of a duplicated sample is twice
//! the gradient of the single sample; the trainer divides by the batch size
//! before the optimiser step.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

const MODEL_MAGIC: &[u8; 4] = b"CBFM";
const MODEL_VERSION: u32 = 1;

/// One affine layer: `z = x W + b` with `W` of shape `fan_in x fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Multilayer perceptron with ReLU hidden activations and a linear output
/// layer. `dropout` is the probability of dropping a hidden unit during
/// training (inverted dropout: survivors are scaled by `1 / (1 - p)` so
/// inference needs no rescaling).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Dense>,
    pub dropout: f64,
}

/// Per-layer parameter gradients, same shapes as the model.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub w: Vec<Array2<f64>>,
    pub b: Vec<Array1<f64>>,
}

impl Gradients {
    fn zeros_like(model: &MlpModel) -> Self {
        Gradients {
            w: model.layers.iter().map(|l| Array2::zeros(l.w.dim())).collect(),
            b: model.layers.iter().map(|l| Array1::zeros(l.b.dim())).collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for w in &mut self.w {
            w.mapv_inplace(|v| v * s);
        }
        for b in &mut self.b {
            b.mapv_inplace(|v| v * s);
        }
    }
}

/// Activations and dropout masks recorded during a training forward pass.
pub struct ForwardCache {
    /// `inputs[l]` is the input to layer `l` (post-activation, post-mask of
    /// the previous layer); `inputs[0]` is the batch itself.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of every layer.
    pre: Vec<Array2<f64>>,
    /// Scaled dropout masks per hidden layer (entries 0 or `1/keep`).
    masks: Vec<Array2<f64>>,
    /// Network output.
    pub output: Array2<f64>,
}

impl MlpModel {
    /// Builds a network with the given layer widths, e.g. `[256, 128, 64]`
    /// for one hidden layer. Weights are drawn from the symmetric uniform
    /// distribution `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`; biases start at
    /// zero. Deterministic for a fixed seed.
    pub fn new(dims: &[usize], dropout: f64, seed: u64) -> Self {
        assert!(dims.len() >= 2, "need at least input and output widths");
        assert!((0.0..1.0).contains(&dropout), "dropout must be in [0, 1)");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|io| {
                let (fan_in, fan_out) = (io[0], io[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut w = Array2::zeros((fan_in, fan_out));
                for v in w.iter_mut() {
                    *v = rng.gen_range(-bound..bound);
                }
                Dense {
                    w,
                    b: Array1::zeros(fan_out),
                }
            })
            .collect();
        MlpModel { layers, dropout }
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].w.nrows()];
        dims.extend(self.layers.iter().map(|l| l.w.ncols()));
        dims
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().w.ncols()
    }

    /// Inference forward pass (dropout disabled).
    pub fn forward(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.w) + &layer.b;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        a
    }

    /// Training forward pass: applies inverted dropout to hidden
    /// activations and records everything needed for backpropagation.
    pub fn forward_train(&self, x: &ArrayView2<f64>, rng: &mut ChaCha8Rng) -> ForwardCache {
        let keep = 1.0 - self.dropout;
        let last = self.layers.len() - 1;
        let mut inputs = vec![x.to_owned()];
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(last);
        for (l, layer) in self.layers.iter().enumerate() {
            let z = inputs[l].dot(&layer.w) + &layer.b;
            pre.push(z.clone());
            if l < last {
                let mut a = z;
                a.mapv_inplace(|v| v.max(0.0));
                let mask = if self.dropout > 0.0 {
                    let mut m = Array2::zeros(a.dim());
                    for v in m.iter_mut() {
                        *v = if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 };
                    }
                    m
                } else {
                    Array2::ones(a.dim())
                };
                a = a * &mask;
                masks.push(mask);
                inputs.push(a);
            } else {
                inputs.push(z);
            }
        }
        let output = inputs.last().unwrap().clone();
        ForwardCache {
            inputs,
            pre,
            masks,
            output,
        }
    }

    /// Loss and analytic parameter gradients for a batch, dropout disabled
    /// (the clean path used for gradient verification and evaluation).
    pub fn backward(&self, x: &ArrayView2<f64>, target: &ArrayView2<f64>) -> (f64, Gradients) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let clean = MlpModel {
            layers: self.layers.clone(),
            dropout: 0.0,
        };
        let cache = clean.forward_train(x, &mut rng);
        let loss = sum_squared_error(&cache.output, target);
        let grads = clean.backward_from_cache(&cache, target);
        (loss, grads)
    }

    /// Gradients of the sum-reduced squared error through a recorded
    /// forward pass (respecting its dropout masks).
    pub fn backward_from_cache(&self, cache: &ForwardCache, target: &ArrayView2<f64>) -> Gradients {
        let mut grads = Gradients::zeros_like(self);
        // d L / d output for L = sum (output - target)^2.
        let mut delta: Array2<f64> = (&cache.output - target) * 2.0;
        for l in (0..self.layers.len()).rev() {
            grads.w[l] = cache.inputs[l].t().dot(&delta);
            grads.b[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut upstream = delta.dot(&self.layers[l].w.t());
                // Through the dropout mask, then the ReLU gate of layer l-1.
                upstream = upstream * &cache.masks[l - 1];
                let gate = cache.pre[l - 1].mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                delta = upstream * &gate;
            }
        }
        grads
    }
}

/// Squared error summed over every output entry (batch rows included).
pub fn sum_squared_error(pred: &Array2<f64>, target: &ArrayView2<f64>) -> f64 {
    assert_eq!(pred.dim(), target.dim(), "prediction/target shape mismatch");
    pred.iter()
        .zip(target.iter())
        .map(|(p, t)| (p - t) * (p - t))
        .sum()
}

/// Adam optimiser state (first/second moments per parameter tensor).
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    t: u64,
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
}

impl Adam {
    pub fn new(model: &MlpModel, learning_rate: f64, beta1: f64, beta2: f64) -> Self {
        Adam {
            learning_rate,
            beta1,
            beta2,
            epsilon: 1e-8,
            t: 0,
            m_w: model.layers.iter().map(|l| Array2::zeros(l.w.dim())).collect(),
            v_w: model.layers.iter().map(|l| Array2::zeros(l.w.dim())).collect(),
            m_b: model.layers.iter().map(|l| Array1::zeros(l.b.dim())).collect(),
            v_b: model.layers.iter().map(|l| Array1::zeros(l.b.dim())).collect(),
        }
    }

    /// One update step with the given (already batch-averaged) gradients.
    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients) {
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for l in 0..model.layers.len() {
            update_tensor(
                &mut model.layers[l].w,
                &grads.w[l],
                &mut self.m_w[l],
                &mut self.v_w[l],
                self.learning_rate,
                self.beta1,
                self.beta2,
                self.epsilon,
                bc1,
                bc2,
            );
            update_vector(
                &mut model.layers[l].b,
                &grads.b[l],
                &mut self.m_b[l],
                &mut self.v_b[l],
                self.learning_rate,
                self.beta1,
                self.beta2,
                self.epsilon,
                bc1,
                bc2,
            );
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn update_tensor(
    param: &mut Array2<f64>,
    grad: &Array2<f64>,
    m: &mut Array2<f64>,
    v: &mut Array2<f64>,
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
) {
    azip_update(
        param.iter_mut(),
        grad.iter(),
        m.iter_mut(),
        v.iter_mut(),
        lr,
        b1,
        b2,
        eps,
        bc1,
        bc2,
    );
}

#[allow(clippy::too_many_arguments)]
fn update_vector(
    param: &mut Array1<f64>,
    grad: &Array1<f64>,
    m: &mut Array1<f64>,
    v: &mut Array1<f64>,
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
) {
    azip_update(
        param.iter_mut(),
        grad.iter(),
        m.iter_mut(),
        v.iter_mut(),
        lr,
        b1,
        b2,
        eps,
        bc1,
        bc2,
    );
}

#[allow(clippy::too_many_arguments)]
fn azip_update<'a>(
    param: impl Iterator<Item = &'a mut f64>,
    grad: impl Iterator<Item = &'a f64>,
    m: impl Iterator<Item = &'a mut f64>,
    v: impl Iterator<Item = &'a mut f64>,
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
) {
    for (((p, g), mm), vv) in param.zip(grad).zip(m).zip(v) {
        *mm = b1 * *mm + (1.0 - b1) * g;
        *vv = b2 * *vv + (1.0 - b2) * g * g;
        let m_hat = *mm / bc1;
        let v_hat = *vv / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("not a model checkpoint (bad magic or version {found})")]
    FormatVersionMismatch { found: u32 },
    #[error("model checkpoint failed its checksum or is truncated")]
    Corrupt,
    #[error("model io: {0}")]
    Io(#[from] std::io::Error),
}

/// Saves the model in a little-endian binary checkpoint (magic `CBFM`):
/// layer widths, dropout, then row-major weight and bias doubles, protected
/// by a trailing CRC32 of the payload.
pub fn save_model(model: &MlpModel, path: &Path) -> Result<(), ModelIoError> {
    let mut payload = Vec::new();
    let dims = model.layer_dims();
    payload.extend_from_slice(&(dims.len() as u32 - 1).to_le_bytes());
    for d in &dims {
        payload.extend_from_slice(&(*d as u32).to_le_bytes());
    }
    payload.extend_from_slice(&model.dropout.to_le_bytes());
    for layer in &model.layers {
        for v in layer.w.iter() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        for v in layer.b.iter() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&payload);
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&MODEL_VERSION.to_le_bytes())?;
    w.write_all(&payload)?;
    w.write_all(&crc.to_le_bytes())?;
    w.flush()?;
    Ok(())
}

/// Loads a checkpoint written by [`save_model`].
pub fn load_model(path: &Path) -> Result<MlpModel, ModelIoError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 12 || &bytes[..4] != MODEL_MAGIC {
        return Err(ModelIoError::FormatVersionMismatch { found: 0 });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != MODEL_VERSION {
        return Err(ModelIoError::FormatVersionMismatch { found: version });
    }
    let payload = &bytes[8..bytes.len() - 4];
    let stored_crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    if crc32fast::hash(payload) != stored_crc {
        return Err(ModelIoError::Corrupt);
    }
    let mut r = std::io::Cursor::new(payload);
    let mut u32buf = [0u8; 4];
    let mut f64buf = [0u8; 8];
    r.read_exact(&mut u32buf).map_err(|_| ModelIoError::Corrupt)?;
    let n_layers = u32::from_le_bytes(u32buf) as usize;
    let mut dims = Vec::with_capacity(n_layers + 1);
    for _ in 0..=n_layers {
        r.read_exact(&mut u32buf).map_err(|_| ModelIoError::Corrupt)?;
        dims.push(u32::from_le_bytes(u32buf) as usize);
    }
    r.read_exact(&mut f64buf).map_err(|_| ModelIoError::Corrupt)?;
    let dropout = f64::from_le_bytes(f64buf);
    let mut layers = Vec::with_capacity(n_layers);
    for io in dims.windows(2) {
        let (fan_in, fan_out) = (io[0], io[1]);
        let mut w = Array2::zeros((fan_in, fan_out));
        for v in w.iter_mut() {
            r.read_exact(&mut f64buf).map_err(|_| ModelIoError::Corrupt)?;
            *v = f64::from_le_bytes(f64buf);
        }
        let mut b = Array1::zeros(fan_out);
        for v in b.iter_mut() {
            r.read_exact(&mut f64buf).map_err(|_| ModelIoError::Corrupt)?;
            *v = f64::from_le_bytes(f64buf);
        }
        layers.push(Dense { w, b });
    }
    if r.position() as usize != payload.len() {
        return Err(ModelIoError::Corrupt);
    }
    Ok(MlpModel { layers, dropout })
}
