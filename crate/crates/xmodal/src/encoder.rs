//! Trainable MLP encoders mapping precomputed audio/text feature vectors into
//! the shared embedding space, with hand-derived backward passes and inverted
//! dropout.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{row_l2_normalize, row_l2_normalize_backward, RowNormCache, SeededRng};
use crate::{Matrix, TensorError};

pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    pub dropout_rate: f64,
    pub init_scale: f64,
}

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("invalid mlp config: {0}")]
    BadConfig(String),
    #[error("forward/backward cache does not match params: {0}")]
    CacheMismatch(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl MlpConfig {
    /// Default encoder shape: input → 64 → 32 → 16, tanh, dropout 0.2.
    pub fn default_encoder(input_dim: usize) -> Self {
        MlpConfig {
            input_dim,
            hidden_dims: vec![64, 32],
            output_dim: 16,
            activation: Activation::Tanh,
            dropout_rate: 0.2,
            init_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(EncoderError::BadConfig("all dims must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(EncoderError::BadConfig(format!(
                "dropout_rate must lie in [0,1), got {}",
                self.dropout_rate
            )));
        }
        if !self.init_scale.is_finite() || self.init_scale <= 0.0 {
            return Err(EncoderError::BadConfig("init_scale must be positive".into()));
        }
        Ok(())
    }

    /// (fan_in, fan_out) per layer, input through output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden_dims);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// Weights and biases of one MLP. `weights[l]` has shape (fan_in, fan_out);
/// biases are length fan_out.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

/// Gradients mirroring [`MlpParams`] shapes.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub d_weights: Vec<Matrix>,
    pub d_biases: Vec<Vec<f64>>,
}

impl MlpParams {
    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn zeros_like(&self) -> MlpGrads {
        MlpGrads {
            d_weights: self
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            d_biases: self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// Flat parameter vector (weights then bias, layer by layer); used by the
    /// gradient checker and the checkpoint fingerprint.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn unflatten_into(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let n = w.data().len();
            w.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
            let nb = b.len();
            b.copy_from_slice(&flat[offset..offset + nb]);
            offset += nb;
        }
        debug_assert_eq!(offset, flat.len());
    }
}

/// Per-layer intermediates needed by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer (post-dropout output of the previous one).
    inputs: Vec<Matrix>,
    /// Pre-activation z = x·W + b per layer.
    pre_acts: Vec<Matrix>,
    /// Inverted-dropout masks per hidden layer (None in eval mode or p = 0).
    dropout_masks: Vec<Option<Matrix>>,
}

/// Weights uniform in [−init_scale/√fan_in, +init_scale/√fan_in], biases zero.
pub fn init_mlp(config: &MlpConfig, rng: &mut SeededRng) -> Result<MlpParams, EncoderError> {
    config.validate()?;
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for (fan_in, fan_out) in config.layer_dims() {
        let bound = config.init_scale / (fan_in as f64).sqrt();
        let data: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| rng.uniform(-bound, bound))
            .collect();
        weights.push(Matrix::from_vec(fan_in, fan_out, data)?);
        biases.push(vec![0.0; fan_out]);
    }
    Ok(MlpParams { weights, biases })
}

fn apply_activation(z: &Matrix, act: Activation) -> Matrix {
    match act {
        Activation::Tanh => z.map(f64::tanh),
        Activation::Relu => z.map(|v| v.max(0.0)),
    }
}

fn activation_grad(z: &Matrix, act: Activation) -> Matrix {
    match act {
        Activation::Tanh => z.map(|v| {
            let t = v.tanh();
            1.0 - t * t
        }),
        Activation::Relu => z.map(|v| if v > 0.0 { 1.0 } else { 0.0 }),
    }
}

/// Batch forward pass. Hidden layers apply the activation then (in train mode)
/// inverted dropout; the output layer is linear. Eval mode never consumes rng.
pub fn forward(
    params: &MlpParams,
    config: &MlpConfig,
    x: &Matrix,
    train_mode: bool,
    rng: &mut SeededRng,
) -> Result<(Matrix, ForwardCache), EncoderError> {
    if x.cols() != config.input_dim {
        return Err(TensorError::DimMismatch {
            op: "mlp forward",
            left_rows: x.rows(),
            left_cols: x.cols(),
            right_rows: config.input_dim,
            right_cols: config.output_dim,
        }
        .into());
    }
    let n_layers = params.n_layers();
    let mut inputs = Vec::with_capacity(n_layers);
    let mut pre_acts = Vec::with_capacity(n_layers);
    let mut dropout_masks = Vec::with_capacity(n_layers);
    let mut a = x.clone();
    for l in 0..n_layers {
        let mut z = a.matmul(&params.weights[l])?;
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&params.biases[l]) {
                *v += b;
            }
        }
        inputs.push(a);
        let last = l == n_layers - 1;
        let mut h = if last {
            z.clone()
        } else {
            apply_activation(&z, config.activation)
        };
        let mask = if !last && train_mode && config.dropout_rate > 0.0 {
            let keep = 1.0 - config.dropout_rate;
            let mut m = Matrix::zeros(h.rows(), h.cols());
            for v in m.data_mut() {
                *v = if rng.gen_bool(keep) { 1.0 / keep } else { 0.0 };
            }
            for (hv, mv) in h.data_mut().iter_mut().zip(m.data()) {
                *hv *= mv;
            }
            Some(m)
        } else {
            None
        };
        pre_acts.push(z);
        dropout_masks.push(mask);
        a = h;
    }
    Ok((
        a,
        ForwardCache {
            inputs,
            pre_acts,
            dropout_masks,
        },
    ))
}

/// Backward pass through the MLP. Returns parameter gradients and the
/// gradient with respect to the input batch.
pub fn backward(
    params: &MlpParams,
    config: &MlpConfig,
    cache: &ForwardCache,
    d_out: &Matrix,
) -> Result<(MlpGrads, Matrix), EncoderError> {
    let n_layers = params.n_layers();
    if cache.inputs.len() != n_layers {
        return Err(EncoderError::CacheMismatch(format!(
            "cache has {} layers, params have {}",
            cache.inputs.len(),
            n_layers
        )));
    }
    if d_out.shape() != (cache.inputs[0].rows(), config.output_dim) {
        return Err(EncoderError::CacheMismatch(format!(
            "d_out shape {:?} does not match batch ({}, {})",
            d_out.shape(),
            cache.inputs[0].rows(),
            config.output_dim
        )));
    }
    let mut grads = params.zeros_like();
    let mut d_h = d_out.clone();
    for l in (0..n_layers).rev() {
        // output layer is linear; hidden layers undo dropout then activation
        let d_z = if l == n_layers - 1 {
            d_h
        } else {
            let mut d = d_h;
            if let Some(mask) = &cache.dropout_masks[l] {
                for (v, m) in d.data_mut().iter_mut().zip(mask.data()) {
                    *v *= m;
                }
            }
            let g = activation_grad(&cache.pre_acts[l], config.activation);
            for (v, gv) in d.data_mut().iter_mut().zip(g.data()) {
                *v *= gv;
            }
            d
        };
        grads.d_weights[l] = cache.inputs[l].transpose().matmul(&d_z)?;
        for r in 0..d_z.rows() {
            for (gb, v) in grads.d_biases[l].iter_mut().zip(d_z.row(r)) {
                *gb += v;
            }
        }
        d_h = d_z.matmul(&params.weights[l].transpose())?;
    }
    Ok((grads, d_h))
}

/// Cache for the forward + row-normalization composite.
#[derive(Debug, Clone)]
pub struct EncodeCache {
    pub mlp: ForwardCache,
    pub norm: RowNormCache<f64>,
}

/// Forward pass followed by row L2 normalization onto the unit hypersphere.
pub fn encode_normalized(
    params: &MlpParams,
    config: &MlpConfig,
    x: &Matrix,
    train_mode: bool,
    rng: &mut SeededRng,
) -> Result<(Matrix, EncodeCache), EncoderError> {
    let (emb, mlp_cache) = forward(params, config, x, train_mode, rng)?;
    let (emb_hat, norm_cache) = row_l2_normalize(&emb, NORM_EPS);
    Ok((
        emb_hat,
        EncodeCache {
            mlp: mlp_cache,
            norm: norm_cache,
        },
    ))
}

/// Backward of [`encode_normalized`].
pub fn encode_normalized_backward(
    params: &MlpParams,
    config: &MlpConfig,
    cache: &EncodeCache,
    d_emb_hat: &Matrix,
) -> Result<(MlpGrads, Matrix), EncoderError> {
    let d_emb = row_l2_normalize_backward(&cache.norm, d_emb_hat);
    backward(params, config, &cache.mlp, &d_emb)
}
