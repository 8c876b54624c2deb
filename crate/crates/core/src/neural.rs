//! Dense multilayer perceptrons with exact reverse-mode gradients, SGD and
//! Adam updates, target cloning and a versioned JSON checkpoint format.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Linear,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    HeUniform,
    XavierUniform,
}

/// Architecture of a fully connected network with ReLU hidden layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub output_activation: OutputActivation,
    pub init: Init,
}

impl NetworkSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden,
            output_dim,
            output_activation: OutputActivation::Linear,
            init: Init::HeUniform,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::config("network dimensions must all be >= 1"));
        }
        if self.hidden.is_empty() {
            return Err(Error::config("network needs at least one hidden layer"));
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend(&self.hidden);
        w.push(self.output_dim);
        w
    }
}

/// Hidden-layer presets.
pub fn hidden_preset(name: &str) -> Option<Vec<usize>> {
    match name {
        "mlp256x4" => Some(vec![256; 4]),
        "mlp128x3" => Some(vec![128; 3]),
        "mlp64x2" => Some(vec![64; 2]),
        _ => None,
    }
}

/// Weights are stored row-major, one row per output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.inputs).zip(&self.bias).map(|(row, b)| {
            b + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>()
        }));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: NetworkSpec,
    layers: Vec<Dense>,
}

/// Activations recorded by a forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input, `activations[k]` the output of layer k.
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache always holds the input")
    }
}

/// Parameter-shaped gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias))
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        for a in self.values_mut() {
            *a *= k;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn flat(&self) -> Vec<f64> {
        self.values().copied().collect()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Samples per gradient chunk. Chunk boundaries are fixed so the summation
/// order does not depend on the thread count.
const GRAD_CHUNK: usize = 16;

impl Mlp {
    pub fn new<R: Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let widths = spec.widths();
        let n_layers = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let hidden = k + 1 < n_layers;
                let limit = match (spec.init, hidden) {
                    (Init::HeUniform, true) => (6.0 / fan_in as f64).sqrt(),
                    _ => (6.0 / (fan_in + fan_out) as f64).sqrt(),
                };
                let mut layer = Dense::zeros(fan_in, fan_out);
                for wv in &mut layer.weights {
                    *wv = rng.random_range(-limit..limit);
                }
                layer
            })
            .collect();
        Ok(Self { spec, layers })
    }

    /// Builds a network from explicit layers, checking them against the spec.
    pub fn from_layers(spec: NetworkSpec, layers: Vec<Dense>) -> Result<Self> {
        spec.validate()?;
        let widths = spec.widths();
        if layers.len() != widths.len() - 1 {
            return Err(Error::SpecMismatch(format!(
                "expected {} layers, got {}",
                widths.len() - 1,
                layers.len()
            )));
        }
        for (l, w) in layers.iter().zip(widths.windows(2)) {
            if l.inputs != w[0]
                || l.outputs != w[1]
                || l.weights.len() != w[0] * w[1]
                || l.bias.len() != w[1]
            {
                return Err(Error::SpecMismatch("layer shape differs from spec".into()));
            }
            if !l.weights.iter().chain(&l.bias).all(|v| v.is_finite()) {
                return Err(Error::NonFinite("layer parameters"));
            }
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .copied()
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.spec.input_dim {
            return Err(Error::Shape {
                expected: self.spec.input_dim,
                got: input.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let last = self.layers.len() - 1;
        let mut x = input.to_vec();
        let mut y = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            layer.affine(&x, &mut y);
            self.activate(k == last, &mut y);
            std::mem::swap(&mut x, &mut y);
        }
        Ok(x)
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache> {
        self.check_input(input)?;
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        for (k, layer) in self.layers.iter().enumerate() {
            let mut y = Vec::with_capacity(layer.outputs);
            layer.affine(&activations[k], &mut y);
            self.activate(k == last, &mut y);
            activations.push(y);
        }
        Ok(ForwardCache { activations })
    }

    fn activate(&self, is_output: bool, y: &mut [f64]) {
        if !is_output {
            y.iter_mut().for_each(|v| *v = v.max(0.0));
        } else if self.spec.output_activation == OutputActivation::Sigmoid {
            y.iter_mut().for_each(|v| *v = sigmoid(*v));
        }
    }

    /// Gradients of `output_grad . f(input)` with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64]) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(self);
        self.backward_into(cache, output_grad, &mut grads)?;
        Ok(grads)
    }

    /// Like [`Mlp::backward`] but accumulates into `grads`.
    pub fn backward_into(&self, cache: &ForwardCache, output_grad: &[f64], grads: &mut Gradients) -> Result<()> {
        if output_grad.len() != self.spec.output_dim {
            return Err(Error::Shape {
                expected: self.spec.output_dim,
                got: output_grad.len(),
            });
        }
        if cache.activations.len() != self.layers.len() + 1 {
            return Err(Error::SpecMismatch("forward cache from a different network".into()));
        }
        let last = self.layers.len() - 1;
        let mut delta: Vec<f64> = output_grad.to_vec();
        if self.spec.output_activation == OutputActivation::Sigmoid {
            for (d, y) in delta.iter_mut().zip(cache.output()) {
                *d *= y * (1.0 - y);
            }
        }
        for k in (0..=last).rev() {
            let layer = &self.layers[k];
            let input = &cache.activations[k];
            let g = &mut grads.layers[k];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (gw, xi) in row.iter_mut().zip(input) {
                    *gw += d * xi;
                }
            }
            if k == 0 {
                break;
            }
            let mut prev = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            // ReLU derivative of the hidden activation feeding layer k
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
        Ok(())
    }

    /// Summed loss and parameter gradient over a batch.
    ///
    /// `loss_grad(i, output)` returns the loss of sample `i` and its gradient
    /// with respect to the network output. Samples are processed in fixed-size
    /// chunks (in parallel when `exec` allows) and reduced in chunk order, so
    /// the result is bit-identical in both execution modes.
    pub fn batch_gradient<F>(&self, inputs: &[Vec<f64>], exec: Execution, loss_grad: F) -> Result<(f64, Gradients)>
    where
        F: Fn(usize, &[f64]) -> (f64, Vec<f64>) + Sync + Send,
    {
        let n_chunks = inputs.len().div_ceil(GRAD_CHUNK);
        let partials = exec.map(n_chunks, |c| -> Result<(f64, Gradients)> {
            let mut grads = Gradients::zeros_like(self);
            let mut loss = 0.0;
            let end = ((c + 1) * GRAD_CHUNK).min(inputs.len());
            for i in c * GRAD_CHUNK..end {
                let cache = self.forward_cached(&inputs[i])?;
                let (l, g) = loss_grad(i, cache.output());
                loss += l;
                self.backward_into(&cache, &g, &mut grads)?;
            }
            Ok((loss, grads))
        });
        let mut total = Gradients::zeros_like(self);
        let mut loss = 0.0;
        for part in partials {
            let (l, g) = part?;
            loss += l;
            total.add_assign(&g);
        }
        Ok((loss, total))
    }
}

/// Copies `src` into `dst`. Both must share one spec.
pub fn clone_into(src: &Mlp, dst: &mut Mlp) -> Result<()> {
    if src.spec != dst.spec {
        return Err(Error::SpecMismatch("cannot clone between different architectures".into()));
    }
    dst.layers.clone_from(&src.layers);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub kind: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            kind: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            kind: OptimizerKind::Sgd,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::config("optimizer.learning_rate must be >= 0"));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.epsilon > 0.0) {
            return Err(Error::config("adam betas must lie in [0, 1) and epsilon > 0"));
        }
        Ok(())
    }
}

/// Optimizer with its moment state (unused by SGD).
#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u64,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, net: &Mlp) -> Self {
        let n = match cfg.kind {
            OptimizerKind::Adam => net.num_params(),
            OptimizerKind::Sgd => 0,
        };
        Self {
            cfg,
            first: vec![0.0; n],
            second: vec![0.0; n],
            steps: 0,
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    /// Descends along `grads`. Non-finite gradients are rejected and leave the
    /// parameters untouched.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != net.layers.len()
            || grads
                .layers
                .iter()
                .zip(&net.layers)
                .any(|(g, l)| g.weights.len() != l.weights.len() || g.bias.len() != l.bias.len())
        {
            return Err(Error::SpecMismatch("gradient shape differs from network".into()));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradients"));
        }
        let lr = self.cfg.learning_rate;
        let params = net
            .layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()));
        match self.cfg.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.zip(grads.values()) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                self.steps += 1;
                let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
                let c1 = 1.0 - b1.powf(self.steps as f64);
                let c2 = 1.0 - b2.powf(self.steps as f64);
                for (((p, g), m), v) in params
                    .zip(grads.values())
                    .zip(self.first.iter_mut())
                    .zip(self.second.iter_mut())
                {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + self.cfg.epsilon);
                }
            }
        }
        if !net.is_finite() {
            return Err(Error::NonFinite("parameters after update"));
        }
        Ok(())
    }
}

pub const CHECKPOINT_FORMAT: &str = "vnet-morl/checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRecord {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

/// On-disk checkpoint: network spec, row-major layers and free-form metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub spec: NetworkSpec,
    layers: Vec<LayerRecord>,
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn from_network(net: &Mlp, meta: serde_json::Value) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| LayerRecord {
                weights: l.weights.chunks_exact(l.inputs).map(<[f64]>::to_vec).collect(),
                bias: l.bias.clone(),
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.to_owned(),
            version: CHECKPOINT_VERSION,
            spec: net.spec.clone(),
            layers,
            meta,
        }
    }

    pub fn network(&self) -> Result<Mlp> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::SpecMismatch(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let layers = self
            .layers
            .iter()
            .map(|rec| {
                let outputs = rec.weights.len();
                let inputs = rec.weights.first().map_or(0, Vec::len);
                if rec.weights.iter().any(|r| r.len() != inputs) {
                    return Err(Error::SpecMismatch("ragged weight rows".into()));
                }
                Ok(Dense {
                    inputs,
                    outputs,
                    weights: rec.weights.concat(),
                    bias: rec.bias.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Mlp::from_layers(self.spec.clone(), layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Checkpoint {
            path: path.to_owned(),
            reason: e.to_string(),
        })?;
        ckpt.network().map_err(|e| Error::Checkpoint {
            path: path.to_owned(),
            reason: e.to_string(),
        })?;
        Ok(ckpt)
    }
}
