use super::NeuralError;
use crate::rng;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Negative-side slope of the leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    LeakyRelu,
    Identity,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::LeakyRelu if v <= 0.0 => LEAKY_SLOPE * v,
            _ => v,
        }
    }

    fn derivative(self, v: f64) -> f64 {
        match self {
            Activation::LeakyRelu if v <= 0.0 => LEAKY_SLOPE,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics for batch-norm layers.
    Train,
    /// Running statistics; the pass is a pure function of the input row.
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
            momentum: 0.1,
            eps: 1e-5,
        }
    }
}

/// `act(bn(x Wᵀ + b))`, batch norm optional.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub batch_norm: Option<BatchNorm>,
    pub activation: Activation,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Architecture of a fully connected chain: leaky-ReLU hidden layers and an
/// identity output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    #[serde(default)]
    pub batch_norm: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<Layer>,
}

#[derive(Debug, Clone)]
struct BnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    batch_mean: Array1<f64>,
    batch_var: Array1<f64>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Array2<f64>,
    bn: Option<BnCache>,
    pre_activation: Array2<f64>,
}

/// Intermediate values of one forward pass, consumed by [`DenseNet::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    mode: Mode,
    layers: Vec<LayerCache>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub gamma: Option<Array1<f64>>,
    pub beta: Option<Array1<f64>>,
}

/// Parameter gradients (same shapes as the net) plus the input gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
    pub input: Array2<f64>,
}

impl DenseNet {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self, NeuralError> {
        if layers.is_empty() {
            return Err(NeuralError::Shape("a net needs at least one layer".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.output_dim() {
                return Err(NeuralError::Shape(format!(
                    "layer {i}: bias length mismatch"
                )));
            }
            if let Some(bn) = &layer.batch_norm {
                let w = layer.output_dim();
                if [
                    bn.gamma.len(),
                    bn.beta.len(),
                    bn.running_mean.len(),
                    bn.running_var.len(),
                ]
                .iter()
                .any(|&l| l != w)
                {
                    return Err(NeuralError::Shape(format!(
                        "layer {i}: batch-norm width mismatch"
                    )));
                }
                if bn.eps.is_nan() || bn.eps <= 0.0 || !(0.0..=1.0).contains(&bn.momentum) {
                    return Err(NeuralError::Shape(format!(
                        "layer {i}: invalid batch-norm constants"
                    )));
                }
            }
            if i > 0 && layers[i - 1].output_dim() != layer.input_dim() {
                return Err(NeuralError::Shape(format!(
                    "layer {i} expects {} inputs, previous layer emits {}",
                    layer.input_dim(),
                    layers[i - 1].output_dim()
                )));
            }
        }
        let net = Self { layers };
        if !net.is_finite() {
            return Err(NeuralError::NonFinite("initial parameters".into()));
        }
        Ok(net)
    }

    /// He-normal weights for leaky-ReLU layers, `N(0, 1/in)` for the output
    /// layer, zero biases.
    pub fn init(spec: &NetSpec, seed: u64) -> Result<Self, NeuralError> {
        if spec.input == 0 || spec.output == 0 || spec.hidden.contains(&0) {
            return Err(NeuralError::Shape("layer widths must be >= 1".into()));
        }
        let mut rng = rng::seeded(seed);
        let mut dims = vec![spec.input];
        dims.extend(&spec.hidden);
        dims.push(spec.output);
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let hidden = i < last;
                let gain = if hidden { 2.0 } else { 1.0 };
                let normal = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("positive std");
                Layer {
                    weight: Array2::from_shape_simple_fn((fan_out, fan_in), || {
                        normal.sample(&mut rng)
                    }),
                    bias: Array1::zeros(fan_out),
                    batch_norm: (hidden && spec.batch_norm).then(|| BatchNorm::new(fan_out)),
                    activation: if hidden {
                        Activation::LeakyRelu
                    } else {
                        Activation::Identity
                    },
                }
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn has_batch_norm(&self) -> bool {
        self.layers.iter().any(|l| l.batch_norm.is_some())
    }

    pub fn parameter_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.param_slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
            && self.layers.iter().all(|l| {
                l.batch_norm.as_ref().is_none_or(|bn| {
                    bn.running_mean
                        .iter()
                        .chain(&bn.running_var)
                        .all(|v| v.is_finite())
                })
            })
    }

    /// Trainable parameters in a fixed order: per layer weight, bias, then
    /// batch-norm scale and shift when present.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.weight.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
            if let Some(bn) = &l.batch_norm {
                out.push(bn.gamma.as_slice().expect("standard layout"));
                out.push(bn.beta.as_slice().expect("standard layout"));
            }
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
            if let Some(bn) = &mut l.batch_norm {
                out.push(bn.gamma.as_slice_mut().expect("standard layout"));
                out.push(bn.beta.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    fn check_input(&self, x: &ArrayView2<f64>, mode: Mode) -> Result<(), NeuralError> {
        if x.ncols() != self.input_dim() {
            return Err(NeuralError::Dimension {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        if x.nrows() == 0 {
            return Err(NeuralError::EmptyBatch);
        }
        if mode == Mode::Train && x.nrows() < 2 && self.has_batch_norm() {
            return Err(NeuralError::BatchTooSmall(x.nrows()));
        }
        Ok(())
    }

    /// Forward pass without side effects. Train mode normalizes with batch
    /// statistics but does not touch the running statistics.
    pub fn forward_pass(
        &self,
        x: ArrayView2<f64>,
        mode: Mode,
    ) -> Result<(Array2<f64>, ForwardCache), NeuralError> {
        self.check_input(&x, mode)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut current = x.to_owned();
        for layer in &self.layers {
            let mut z = current.dot(&layer.weight.t());
            z += &layer.bias;
            let bn_cache = layer.batch_norm.as_ref().map(|bn| {
                let (mean, var) = match mode {
                    Mode::Train => {
                        let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
                        let var = z.var_axis(Axis(0), 0.0);
                        (mean, var)
                    }
                    Mode::Eval => (bn.running_mean.clone(), bn.running_var.clone()),
                };
                let inv_std = var.mapv(|v| 1.0 / (v + bn.eps).sqrt());
                let xhat = (&z - &mean) * &inv_std;
                z = &xhat * &bn.gamma + &bn.beta;
                BnCache {
                    xhat,
                    inv_std,
                    batch_mean: mean,
                    batch_var: var,
                }
            });
            let out = z.mapv(|v| layer.activation.apply(v));
            caches.push(LayerCache {
                input: current,
                bn: bn_cache,
                pre_activation: z,
            });
            current = out;
        }
        Ok((
            current,
            ForwardCache {
                mode,
                layers: caches,
            },
        ))
    }

    /// Forward pass; in train mode also folds the batch statistics into the
    /// batch-norm running estimates.
    pub fn forward(
        &mut self,
        x: ArrayView2<f64>,
        mode: Mode,
    ) -> Result<(Array2<f64>, ForwardCache), NeuralError> {
        let (out, cache) = self.forward_pass(x, mode)?;
        if mode == Mode::Train {
            self.update_running_stats(&cache);
        }
        Ok((out, cache))
    }

    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        if cache.mode != Mode::Train {
            return;
        }
        for (layer, lc) in self.layers.iter_mut().zip(&cache.layers) {
            if let (Some(bn), Some(c)) = (layer.batch_norm.as_mut(), lc.bn.as_ref()) {
                let n = c.xhat.nrows() as f64;
                let unbiased = if n > 1.0 {
                    &c.batch_var * (n / (n - 1.0))
                } else {
                    c.batch_var.clone()
                };
                let m = bn.momentum;
                bn.running_mean = &bn.running_mean * (1.0 - m) + &c.batch_mean * m;
                bn.running_var = &bn.running_var * (1.0 - m) + unbiased * m;
            }
        }
    }

    /// Eval-mode output.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NeuralError> {
        self.forward_pass(x, Mode::Eval).map(|(out, _)| out)
    }

    /// Backpropagates `upstream = ∂L/∂output` through the pass recorded in
    /// `cache`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        upstream: ArrayView2<f64>,
    ) -> Result<Gradients, NeuralError> {
        self.backprop(cache, upstream, true)
    }

    /// Only `∂L/∂input`; skips the parameter gradients.
    pub fn input_gradient(
        &self,
        cache: &ForwardCache,
        upstream: ArrayView2<f64>,
    ) -> Result<Array2<f64>, NeuralError> {
        self.backprop(cache, upstream, false).map(|g| g.input)
    }

    fn backprop(
        &self,
        cache: &ForwardCache,
        upstream: ArrayView2<f64>,
        params: bool,
    ) -> Result<Gradients, NeuralError> {
        if cache.layers.len() != self.layers.len() {
            return Err(NeuralError::Shape(
                "cache does not belong to this net".into(),
            ));
        }
        let batch = cache.layers[0].input.nrows();
        if upstream.dim() != (batch, self.output_dim()) {
            return Err(NeuralError::Shape(format!(
                "upstream gradient is {:?}, expected {:?}",
                upstream.dim(),
                (batch, self.output_dim())
            )));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = upstream.to_owned();
        for (layer, lc) in self.layers.iter().zip(&cache.layers).rev() {
            let mut dy = delta;
            dy.zip_mut_with(&lc.pre_activation, |d, &z| {
                *d *= layer.activation.derivative(z)
            });
            let (dz, gamma, beta) = match (&layer.batch_norm, &lc.bn) {
                (Some(bn), Some(c)) => {
                    let (dgamma, dbeta) = if params {
                        ((&dy * &c.xhat).sum_axis(Axis(0)), dy.sum_axis(Axis(0)))
                    } else {
                        (Array1::zeros(0), Array1::zeros(0))
                    };
                    let dxhat = &dy * &bn.gamma;
                    let dz = match cache.mode {
                        Mode::Eval => &dxhat * &c.inv_std,
                        Mode::Train => {
                            let n = dxhat.nrows() as f64;
                            let sum_d = dxhat.sum_axis(Axis(0));
                            let sum_dx = (&dxhat * &c.xhat).sum_axis(Axis(0));
                            ((&dxhat * n - &sum_d) - &c.xhat * &sum_dx) * &(&c.inv_std / n)
                        }
                    };
                    (dz, Some(dgamma), Some(dbeta))
                }
                _ => (dy, None, None),
            };
            let (weight, bias) = if params {
                (
                    dz.t().dot(&lc.input).as_standard_layout().into_owned(),
                    dz.sum_axis(Axis(0)),
                )
            } else {
                (Array2::zeros((0, 0)), Array1::zeros(0))
            };
            delta = dz.dot(&layer.weight);
            grads.push(LayerGrads {
                weight,
                bias,
                gamma,
                beta,
            });
        }
        grads.reverse();
        Ok(Gradients {
            layers: grads,
            input: delta,
        })
    }
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet, batch: usize) -> Self {
        Self {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerGrads {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                    gamma: l
                        .batch_norm
                        .as_ref()
                        .map(|bn| Array1::zeros(bn.gamma.len())),
                    beta: l.batch_norm.as_ref().map(|bn| Array1::zeros(bn.beta.len())),
                })
                .collect(),
            input: Array2::zeros((batch, net.input_dim())),
        }
    }

    /// Parameter gradients in the order of [`DenseNet::param_slices`].
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.weight.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
            if let (Some(g), Some(b)) = (&l.gamma, &l.beta) {
                out.push(g.as_slice().expect("standard layout"));
                out.push(b.as_slice().expect("standard layout"));
            }
        }
        out
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
            if let (Some(g), Some(b)) = (&mut l.gamma, &mut l.beta) {
                out.push(g.as_slice_mut().expect("standard layout"));
                out.push(b.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    /// `self += scale · other` over parameter gradients (input gradient untouched).
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (dst, src) in self
            .param_slices_mut()
            .into_iter()
            .zip(other.param_slices())
        {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for dst in self.param_slices_mut() {
            dst.iter_mut().for_each(|d| *d *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.param_slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn is_zero(&self) -> bool {
        self.param_slices()
            .iter()
            .all(|s| s.iter().all(|&v| v == 0.0))
    }
}
