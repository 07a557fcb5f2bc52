//! Minimal dense-network substrate.
//!
//! Sequential MLPs with manual reverse-mode gradients, an Adam optimizer,
//! deterministic initialization, and a binary checkpoint format. Everything
//! is `f64`; the networks here are small enough that precision is cheap and
//! finite-difference checks stay tight.
//!
//! Hidden layers share one activation; the output layer is always identity.
//! Two models built from the same `(layer_dims, activation, seed)` have
//! bit-identical parameters.

mod adam;
mod checkpoint;

pub use adam::{adam_step, AdamParams, AdamState};
pub use checkpoint::{load_checkpoint, read_checkpoint_file, save_checkpoint, write_checkpoint_file};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::DetRng;

/// Hidden-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Gelu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Gelu => {
                let u = GELU_C * (z + 0.044715 * z * z * z);
                0.5 * z * (1.0 + u.tanh())
            }
        }
    }

    /// Derivative with respect to the pre-activation `z`.
    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Gelu => {
                let u = GELU_C * (z + 0.044715 * z * z * z);
                let t = u.tanh();
                0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * z * z)
            }
        }
    }

    fn id(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Gelu => 2,
        }
    }

    fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Tanh),
            2 => Ok(Activation::Gelu),
            other => Err(Error::Corrupt(format!("unknown activation id {other}"))),
        }
    }
}

// tanh-form GELU constant sqrt(2/pi)
const GELU_C: f64 = 0.797_884_560_802_865_4;

/// Sequential dense network. Weights are row-major `(out_dim, in_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    activation: Activation,
    seed: u64,
}

/// Per-layer values cached by a forward pass, consumed by backprop.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `acts[0]` is the input; `acts[l + 1]` is layer `l`'s post-activation.
    acts: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pres: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace has at least the input")
    }
}

/// Batched forward cache: row-major `batch x dim` per layer. Training loops
/// use this path so weight rows are reused across the whole batch instead of
/// being streamed per sample.
#[derive(Debug, Clone)]
pub struct BatchTrace {
    acts: Vec<Vec<f64>>,
    pres: Vec<Vec<f64>>,
    batch: usize,
}

impl BatchTrace {
    /// Final layer outputs, row-major `batch x output_dim`.
    pub fn outputs(&self) -> &[f64] {
        self.acts.last().expect("trace has at least the inputs")
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Loss gradients with the same shapes as [`MlpModel`] parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// `self += c * other`
    pub fn add_scaled(&mut self, c: f64, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            crate::vecmath::axpy(a, c, b);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            crate::vecmath::axpy(a, c, b);
        }
    }

    pub fn scale(&mut self, c: f64) {
        for w in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            for x in w.iter_mut() {
                *x *= c;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().map(f64::abs).fold(0.0, f64::max)
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .flat_map(|v| v.iter().copied())
    }

    fn shape_matches(&self, model: &MlpModel) -> bool {
        self.weights.len() == model.weights.len()
            && self.biases.len() == model.biases.len()
            && self
                .weights
                .iter()
                .zip(&model.weights)
                .all(|(a, b)| a.len() == b.len())
            && self
                .biases
                .iter()
                .zip(&model.biases)
                .all(|(a, b)| a.len() == b.len())
    }
}

impl MlpModel {
    /// Builds a model with deterministic He-uniform (relu/gelu) or
    /// Xavier-uniform (tanh) weights and zero biases.
    pub fn new(layer_dims: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        validate_dims(layer_dims)?;
        let mut rng = DetRng::derive(seed, 0x6d6c70); // "mlp"
        let mut weights = Vec::with_capacity(layer_dims.len() - 1);
        let mut biases = Vec::with_capacity(layer_dims.len() - 1);
        for win in layer_dims.windows(2) {
            let (fan_in, fan_out) = (win[0], win[1]);
            let limit = match activation {
                Activation::Tanh => (6.0 / (fan_in + fan_out) as f64).sqrt(),
                Activation::Relu | Activation::Gelu => (6.0 / fan_in as f64).sqrt(),
            };
            let w: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.uniform(-limit, limit))
                .collect();
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            activation,
            seed,
        })
    }

    /// Builds a model from explicit parameters.
    pub fn from_parts(
        layer_dims: &[usize],
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        validate_dims(layer_dims)?;
        let n_layers = layer_dims.len() - 1;
        if weights.len() != n_layers {
            return Err(Error::ShapeMismatch {
                context: "from_parts weights",
                expected: n_layers,
                got: weights.len(),
            });
        }
        if biases.len() != n_layers {
            return Err(Error::ShapeMismatch {
                context: "from_parts biases",
                expected: n_layers,
                got: biases.len(),
            });
        }
        for (l, win) in layer_dims.windows(2).enumerate() {
            if weights[l].len() != win[0] * win[1] {
                return Err(Error::ShapeMismatch {
                    context: "from_parts weight matrix",
                    expected: win[0] * win[1],
                    got: weights[l].len(),
                });
            }
            if biases[l].len() != win[1] {
                return Err(Error::ShapeMismatch {
                    context: "from_parts bias vector",
                    expected: win[1],
                    got: biases[l].len(),
                });
            }
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            activation,
            seed,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Parameters in a fixed order (per layer: weights row-major, then biases).
    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
            .copied()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                context: "forward input",
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        Ok(())
    }

    /// Forward pass. Deterministic for a fixed model and input.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let n_layers = self.n_layers();
        let mut cur = input.to_vec();
        for l in 0..n_layers {
            let mut z = self.affine(l, &cur);
            if l + 1 < n_layers {
                for v in z.iter_mut() {
                    *v = self.activation.apply(*v);
                }
            }
            cur = z;
        }
        Ok(cur)
    }

    /// Forward pass that keeps per-layer values for backprop.
    pub fn forward_trace(&self, input: &[f64]) -> Result<ForwardTrace> {
        self.check_input(input)?;
        let n_layers = self.n_layers();
        let mut acts = Vec::with_capacity(n_layers + 1);
        let mut pres = Vec::with_capacity(n_layers);
        acts.push(input.to_vec());
        for l in 0..n_layers {
            let z = self.affine(l, &acts[l]);
            let mut a = z.clone();
            if l + 1 < n_layers {
                for v in a.iter_mut() {
                    *v = self.activation.apply(*v);
                }
            }
            pres.push(z);
            acts.push(a);
        }
        Ok(ForwardTrace { acts, pres })
    }

    /// `z = W a + b` for layer `l`.
    #[inline]
    fn affine(&self, l: usize, a: &[f64]) -> Vec<f64> {
        let in_dim = self.layer_dims[l];
        let out_dim = self.layer_dims[l + 1];
        let w = &self.weights[l];
        let b = &self.biases[l];
        let mut z = Vec::with_capacity(out_dim);
        for o in 0..out_dim {
            let row = &w[o * in_dim..(o + 1) * in_dim];
            z.push(b[o] + crate::vecmath::dot(row, a));
        }
        z
    }

    /// Reverse-mode gradients of a scalar loss whose gradient with respect to
    /// the network output is `output_grad`. Returns parameter gradients and
    /// the gradient with respect to the input.
    pub fn backward(&self, input: &[f64], output_grad: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        let trace = self.forward_trace(input)?;
        self.backward_from_trace(&trace, output_grad)
    }

    /// Backprop reusing an existing trace; accumulation entry point for
    /// training loops.
    pub fn backward_from_trace(
        &self,
        trace: &ForwardTrace,
        output_grad: &[f64],
    ) -> Result<(Gradients, Vec<f64>)> {
        if output_grad.len() != self.output_dim() {
            return Err(Error::ShapeMismatch {
                context: "backward output_grad",
                expected: self.output_dim(),
                got: output_grad.len(),
            });
        }
        let mut grads = Gradients::zeros_like(self);
        let input_grad = self.accumulate_backward(trace, output_grad, &mut grads)?;
        Ok((grads, input_grad))
    }

    /// Backprop that adds parameter gradients into `grads` (`+=` semantics).
    pub fn accumulate_backward(
        &self,
        trace: &ForwardTrace,
        output_grad: &[f64],
        grads: &mut Gradients,
    ) -> Result<Vec<f64>> {
        if !grads.shape_matches(self) {
            return Err(Error::ShapeMismatch {
                context: "accumulate_backward grads",
                expected: self.param_count(),
                got: grads.weights.iter().map(Vec::len).sum::<usize>()
                    + grads.biases.iter().map(Vec::len).sum::<usize>(),
            });
        }
        let n_layers = self.n_layers();
        let mut delta = output_grad.to_vec(); // d loss / d z for the current layer
        for l in (0..n_layers).rev() {
            if l + 1 < n_layers {
                // delta currently holds d loss / d a; fold in the activation.
                let pre = &trace.pres[l];
                for (d, z) in delta.iter_mut().zip(pre) {
                    *d *= self.activation.derivative(*z);
                }
            }
            let in_dim = self.layer_dims[l];
            let a_prev = &trace.acts[l];
            let dw = &mut grads.weights[l];
            for (o, dz) in delta.iter().enumerate() {
                grads.biases[l][o] += dz;
                crate::vecmath::axpy(&mut dw[o * in_dim..(o + 1) * in_dim], *dz, a_prev);
            }
            // d loss / d a_prev
            let mut prev = vec![0.0; in_dim];
            let w = &self.weights[l];
            for (o, dz) in delta.iter().enumerate() {
                crate::vecmath::axpy(&mut prev, *dz, &w[o * in_dim..(o + 1) * in_dim]);
            }
            delta = prev;
        }
        Ok(delta)
    }

    /// Batched forward pass over `batch` rows of `input_dim` values,
    /// keeping per-layer values for [`MlpModel::backward_batch`].
    pub fn forward_batch_trace(&self, inputs: &[f64], batch: usize) -> Result<BatchTrace> {
        if batch == 0 || inputs.len() != batch * self.input_dim() {
            return Err(Error::ShapeMismatch {
                context: "forward_batch inputs",
                expected: batch * self.input_dim(),
                got: inputs.len(),
            });
        }
        let n_layers = self.n_layers();
        let mut acts = Vec::with_capacity(n_layers + 1);
        let mut pres = Vec::with_capacity(n_layers);
        acts.push(inputs.to_vec());
        for l in 0..n_layers {
            let in_dim = self.layer_dims[l];
            let out_dim = self.layer_dims[l + 1];
            let w = &self.weights[l];
            let bias = &self.biases[l];
            let prev = &acts[l];
            let mut z = vec![0.0; batch * out_dim];
            for b in 0..batch {
                let a_row = &prev[b * in_dim..(b + 1) * in_dim];
                let z_row = &mut z[b * out_dim..(b + 1) * out_dim];
                for (o, zv) in z_row.iter_mut().enumerate() {
                    *zv = bias[o] + crate::vecmath::dot(&w[o * in_dim..(o + 1) * in_dim], a_row);
                }
            }
            let mut a = z.clone();
            if l + 1 < n_layers {
                for v in a.iter_mut() {
                    *v = self.activation.apply(*v);
                }
            }
            pres.push(z);
            acts.push(a);
        }
        Ok(BatchTrace { acts, pres, batch })
    }

    /// Batched backprop: adds the summed parameter gradients into `grads`
    /// and returns the input gradients, row-major `batch x input_dim`.
    /// Weight-gradient rows accumulate across the batch in index order, so
    /// results are deterministic.
    pub fn backward_batch(
        &self,
        trace: &BatchTrace,
        output_grads: &[f64],
        grads: &mut Gradients,
    ) -> Result<Vec<f64>> {
        let batch = trace.batch;
        if output_grads.len() != batch * self.output_dim() {
            return Err(Error::ShapeMismatch {
                context: "backward_batch output_grads",
                expected: batch * self.output_dim(),
                got: output_grads.len(),
            });
        }
        if !grads.shape_matches(self) {
            return Err(Error::ShapeMismatch {
                context: "backward_batch grads",
                expected: self.param_count(),
                got: grads.weights.iter().map(Vec::len).sum::<usize>()
                    + grads.biases.iter().map(Vec::len).sum::<usize>(),
            });
        }
        let n_layers = self.n_layers();
        let mut delta = output_grads.to_vec();
        for l in (0..n_layers).rev() {
            let in_dim = self.layer_dims[l];
            let out_dim = self.layer_dims[l + 1];
            if l + 1 < n_layers {
                let pre = &trace.pres[l];
                for (d, z) in delta.iter_mut().zip(pre) {
                    *d *= self.activation.derivative(*z);
                }
            }
            let prev = &trace.acts[l];
            // Bias gradients: column sums of delta.
            for b in 0..batch {
                crate::vecmath::axpy(
                    &mut grads.biases[l],
                    1.0,
                    &delta[b * out_dim..(b + 1) * out_dim],
                );
            }
            // Weight gradients row by row: each dw row stays hot across the
            // whole batch.
            let dw = &mut grads.weights[l];
            for o in 0..out_dim {
                let dw_row = &mut dw[o * in_dim..(o + 1) * in_dim];
                for b in 0..batch {
                    let dz = delta[b * out_dim + o];
                    if dz != 0.0 {
                        crate::vecmath::axpy(dw_row, dz, &prev[b * in_dim..(b + 1) * in_dim]);
                    }
                }
            }
            // Input gradients for the next layer down.
            let w = &self.weights[l];
            let mut prev_delta = vec![0.0; batch * in_dim];
            for b in 0..batch {
                let row = &mut prev_delta[b * in_dim..(b + 1) * in_dim];
                for o in 0..out_dim {
                    let dz = delta[b * out_dim + o];
                    if dz != 0.0 {
                        crate::vecmath::axpy(row, dz, &w[o * in_dim..(o + 1) * in_dim]);
                    }
                }
            }
            delta = prev_delta;
        }
        Ok(delta)
    }

    /// Per-layer weight matrices, row-major `(out_dim, in_dim)`.
    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// Per-layer bias vectors.
    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    /// Overwrites one weight; finite-difference harnesses perturb through
    /// this.
    pub fn set_weight(&mut self, layer: usize, idx: usize, value: f64) {
        self.weights[layer][idx] = value;
    }

    /// Overwrites one bias.
    pub fn set_bias(&mut self, layer: usize, idx: usize, value: f64) {
        self.biases[layer][idx] = value;
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [Vec<f64>], &mut [Vec<f64>]) {
        (&mut self.weights, &mut self.biases)
    }
}

fn validate_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "layer_dims needs at least input and output entries, got {layer_dims:?}"
        )));
    }
    if layer_dims.iter().any(|&d| d == 0) {
        return Err(Error::InvalidConfig(format!(
            "layer_dims must be positive, got {layer_dims:?}"
        )));
    }
    Ok(())
}
