//! Encoder / projector / predictor MLPs plus the client-ID and label heads.
//!
//! All layers compute `x · W + b` with `W` stored as `in × out`. Hidden
//! layers use ReLU; the last layer of every MLP is linear.

mod checkpoint;

use std::ops::Range;

use crate::error::{Error, Result};
use crate::numerics::{row_l2_normalize, Matrix, Rng, NORM_EPS};

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Layer {
    pub fn zeros(inp: usize, out: usize) -> Self {
        Self {
            weight: Matrix::zeros(inp, out),
            bias: Matrix::zeros(1, out),
        }
    }

    /// Uniform(−a, a) weights with `a = sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot(inp: usize, out: usize, rng: &mut Rng) -> Self {
        let a = (6.0 / (inp + out) as f64).sqrt();
        let data = (0..inp * out).map(|_| rng.uniform_range(-a, a)).collect();
        Self {
            weight: Matrix::from_vec(inp, out, data).expect("sized"),
            bias: Matrix::zeros(1, out),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            weight: Matrix::identity(dim),
            bias: Matrix::zeros(1, dim),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = x.matmul(&self.weight)?;
        out.add_row_broadcast(self.bias.as_slice());
        Ok(out)
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.output_dim())
    }
}

/// Intermediate values of one MLP forward pass.
#[derive(Clone, Debug)]
pub struct MlpTrace {
    /// Input fed to each layer.
    pub inputs: Vec<Matrix>,
    /// Pre-activation output of each layer.
    pub pre_activations: Vec<Matrix>,
    pub output: Matrix,
}

impl MlpTrace {
    /// Smallest |pre-activation| over hidden (ReLU) layers, or +∞ if none.
    pub fn min_abs_hidden_preactivation(&self) -> f64 {
        let hidden = self.pre_activations.len().saturating_sub(1);
        self.pre_activations[..hidden]
            .iter()
            .flat_map(|m| m.as_slice().iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Stack of layers, ReLU between them. An empty stack is the identity map.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

impl Mlp {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn glorot(dims: &[usize], rng: &mut Rng) -> Self {
        Self {
            layers: dims.windows(2).map(|w| Layer::glorot(w[0], w[1], rng)).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn forward(&self, x: &Matrix) -> Result<MlpTrace> {
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre_activations = Vec::with_capacity(n);
        let mut current = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            if current.cols() != layer.input_dim() {
                return Err(Error::dims(
                    "Mlp::forward",
                    format!("layer {i} expects {} inputs, got {}", layer.input_dim(), current.cols()),
                ));
            }
            let pre = layer.apply(&current)?;
            let next = if i + 1 < n { pre.map(|v| v.max(0.0)) } else { pre.clone() };
            inputs.push(current);
            pre_activations.push(pre);
            current = next;
        }
        Ok(MlpTrace {
            inputs,
            pre_activations,
            output: current,
        })
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the MLP input.
    pub fn backward(&self, trace: &MlpTrace, d_out: &Matrix, grads: &mut Mlp) -> Matrix {
        let n = self.layers.len();
        let mut d = d_out.clone();
        for i in (0..n).rev() {
            if i + 1 < n {
                let pre = &trace.pre_activations[i];
                for (g, &p) in d.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                    if p <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            let layer = &self.layers[i];
            let g = &mut grads.layers[i];
            g.weight.axpy(1.0, &trace.inputs[i].t_matmul(&d).expect("trace shapes"));
            g.bias.axpy(1.0, &d.column_sums());
            d = d.matmul_t(&layer.weight).expect("trace shapes");
        }
        d
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(Layer::zeros_like).collect(),
        }
    }
}

/// Layer widths of the network.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelDims {
    pub input_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub z_dim: usize,
    pub projector_hidden: usize,
    pub proj_dim: usize,
    /// Hidden width of the SimSiam predictor; `0` builds no predictor.
    pub predictor_hidden: usize,
    pub num_clients: usize,
    pub num_classes: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            input_dim: 16,
            encoder_hidden: vec![64],
            z_dim: 32,
            projector_hidden: 64,
            proj_dim: 16,
            predictor_hidden: 0,
            num_clients: 10,
            num_classes: 10,
        }
    }
}

/// Every trainable tensor of the model.
///
/// The same type doubles as the gradient container: a gradient is a
/// `ModelParams` of identical shape.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub encoder: Mlp,
    pub projector: Mlp,
    /// SimSiam predictor; empty for the other methods.
    pub predictor: Mlp,
    /// `num_clients × proj_dim`, unit rows, no bias.
    pub uv_weights: Matrix,
    /// Linear classifier on the encoder output.
    pub label_head: Layer,
}

/// Values of a full forward pass needed by [`ModelParams::backward`].
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub encoder: MlpTrace,
    pub projector: MlpTrace,
}

impl ForwardTrace {
    /// Encoder output.
    pub fn z(&self) -> &Matrix {
        &self.encoder.output
    }

    pub fn projection(&self) -> &Matrix {
        &self.projector.output
    }

    pub fn min_abs_hidden_preactivation(&self) -> f64 {
        self.encoder
            .min_abs_hidden_preactivation()
            .min(self.projector.min_abs_hidden_preactivation())
    }
}

impl ModelParams {
    pub fn init(dims: &ModelDims, rng: &mut Rng) -> Result<Self> {
        if dims.input_dim == 0 || dims.z_dim == 0 || dims.proj_dim == 0 {
            return Err(Error::config("model dimensions must be positive"));
        }
        if dims.num_clients == 0 || dims.num_classes == 0 {
            return Err(Error::config("model needs at least one client and one class"));
        }
        let mut enc_dims = vec![dims.input_dim];
        enc_dims.extend(&dims.encoder_hidden);
        enc_dims.push(dims.z_dim);
        let encoder = Mlp::glorot(&enc_dims, rng);
        let projector = Mlp::glorot(&[dims.z_dim, dims.projector_hidden, dims.proj_dim], rng);
        let predictor = if dims.predictor_hidden > 0 {
            Mlp::glorot(&[dims.proj_dim, dims.predictor_hidden, dims.proj_dim], rng)
        } else {
            Mlp::default()
        };
        let raw = (0..dims.num_clients * dims.proj_dim).map(|_| rng.normal()).collect();
        let uv_weights = row_l2_normalize(&Matrix::from_vec(dims.num_clients, dims.proj_dim, raw)?, NORM_EPS);
        let label_head = Layer::glorot(dims.z_dim, dims.num_classes, rng);
        Ok(Self {
            encoder,
            projector,
            predictor,
            uv_weights,
            label_head,
        })
    }

    pub fn num_clients(&self) -> usize {
        self.uv_weights.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.label_head.output_dim()
    }

    /// Zero tensor of identical layout.
    pub fn zeros_like(&self) -> Self {
        Self {
            encoder: self.encoder.zeros_like(),
            projector: self.projector.zeros_like(),
            predictor: self.predictor.zeros_like(),
            uv_weights: Matrix::zeros(self.uv_weights.rows(), self.uv_weights.cols()),
            label_head: self.label_head.zeros_like(),
        }
    }

    /// Tensors in flatten order: encoder, projector, predictor (each layer
    /// weight then bias), uv weights, label-head weight, label-head bias.
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for mlp in [&self.encoder, &self.projector, &self.predictor] {
            for l in &mlp.layers {
                out.push(&l.weight);
                out.push(&l.bias);
            }
        }
        out.push(&self.uv_weights);
        out.push(&self.label_head.weight);
        out.push(&self.label_head.bias);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for mlp in [&mut self.encoder, &mut self.projector, &mut self.predictor] {
            for l in &mut mlp.layers {
                out.push(&mut l.weight);
                out.push(&mut l.bias);
            }
        }
        out.push(&mut self.uv_weights);
        out.push(&mut self.label_head.weight);
        out.push(&mut self.label_head.bias);
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        for t in self.tensors() {
            v.extend_from_slice(t.as_slice());
        }
        v
    }

    /// Rebuilds parameters of this layout from a flat vector.
    pub fn unflatten(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.num_params() {
            return Err(Error::dims(
                "unflatten",
                format!("expected {} values, got {}", self.num_params(), flat.len()),
            ));
        }
        let mut out = self.clone();
        let mut offset = 0;
        for t in out.tensors_mut() {
            let n = t.len();
            t.as_mut_slice().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(out)
    }

    /// Position of the uv weight block inside the flat vector.
    pub fn uv_range(&self) -> Range<usize> {
        let start: usize = self
            .tensors()
            .iter()
            .take_while(|t| !std::ptr::eq(**t, &self.uv_weights))
            .map(|t| t.len())
            .sum();
        start..start + self.uv_weights.len()
    }

    /// Position of uv row `client` inside the flat vector.
    pub fn uv_row_range(&self, client: usize) -> Range<usize> {
        let d = self.uv_weights.cols();
        let start = self.uv_range().start + client * d;
        start..start + d
    }

    /// `self += alpha * other`; layouts must match.
    pub fn axpy(&mut self, alpha: f64, other: &ModelParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.axpy(alpha, b);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .map(|t| t.as_slice().iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Runs the encoder and projector on a batch.
    pub fn forward_encoder(&self, x: &Matrix) -> Result<ForwardTrace> {
        let encoder = self.encoder.forward(x)?;
        let projector = self.projector.forward(&encoder.output)?;
        Ok(ForwardTrace { encoder, projector })
    }

    /// Backpropagates gradients arriving at the projection and (optionally)
    /// directly at the encoder output, accumulating into `grads`.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        d_projection: Option<&Matrix>,
        d_z: Option<&Matrix>,
        grads: &mut ModelParams,
    ) {
        let z = trace.z();
        let mut dz = match d_projection {
            Some(dp) => self.projector.backward(&trace.projector, dp, &mut grads.projector),
            None => Matrix::zeros(z.rows(), z.cols()),
        };
        if let Some(extra) = d_z {
            dz.axpy(1.0, extra);
        }
        self.encoder.backward(&trace.encoder, &dz, &mut grads.encoder);
    }

    /// Cosine logits of the client-ID head: normalized input against unit rows.
    pub fn uv_logits(&self, z_proj: &Matrix) -> Result<Matrix> {
        row_l2_normalize(z_proj, NORM_EPS).matmul_t(&self.uv_weights)
    }

    /// Re-normalizes every uv row to unit length.
    pub fn project_uv_rows(&mut self) {
        self.uv_weights = row_l2_normalize(&self.uv_weights, NORM_EPS);
    }

    /// Re-normalizes uv row `client` only.
    pub fn project_uv_row(&mut self, client: usize) {
        let row = self.uv_weights.row_mut(client);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_EPS);
        if (norm - 1.0).abs() > 4.0 * f64::EPSILON {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
}

/// Whether gradients flow into a branch. `Stopped` marks a stop-gradient
/// region: the value is used forward, and backward contributes nothing to
/// whatever produced it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradFlow {
    Tracked,
    Stopped,
}
