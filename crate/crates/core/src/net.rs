//! Minimal dense-network engine: deterministic forward/backward passes,
//! softmax/cross-entropy, and a plain SGD step.
//!
//! Networks are plain structs of `f64` weights; there is no autodiff graph.
//! `forward` records the activation trace needed by `backward`, and a
//! checksum of the parameter values ties each trace to the exact parameters
//! it was produced from.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative as a function of the pre-activation. relu'(0) is defined
    /// as 0, matching the sign(0) = 0 convention used by the attacks.
    pub fn derivative(self, z: f64) -> f64 {
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
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            _ => Err(Error::Config(format!("unknown activation '{s}'"))),
        }
    }
}

/// One dense layer: `out × in` weight matrix (row-major), bias, activation.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(
        input_dim: usize,
        output_dim: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if weight.len() != input_dim * output_dim {
            return Err(Error::Shape(format!(
                "weight length {} does not match {}x{}",
                weight.len(),
                output_dim,
                input_dim
            )));
        }
        if bias.len() != output_dim {
            return Err(Error::Shape(format!(
                "bias length {} does not match output dim {}",
                bias.len(),
                output_dim
            )));
        }
        if weight.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("layer parameter".into()));
        }
        Ok(Self {
            weight,
            bias,
            input_dim,
            output_dim,
            activation,
        })
    }

    fn affine(&self, x: &[f64], out: &mut [f64]) {
        for (o, out_v) in out.iter_mut().enumerate() {
            let row = &self.weight[o * self.input_dim..(o + 1) * self.input_dim];
            let mut acc = self.bias[o];
            for (w, xi) in row.iter().zip(x.iter()) {
                acc += w * xi;
            }
            *out_v = acc;
        }
    }
}

/// Ordered stack of dense layers with chained dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    layers: Vec<DenseLayer>,
}

impl ParameterSet {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("parameter set needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim != pair[1].input_dim {
                return Err(Error::Shape(format!(
                    "layer dims do not chain: {} -> {}",
                    pair[0].output_dim, pair[1].input_dim
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Seeded initialization with uniform(-sqrt(6/(in+out)), +sqrt(6/(in+out)))
    /// weights and zero biases. `dims` lists layer widths from input to
    /// output; hidden layers use `hidden_act`, the last layer `output_act`.
    pub fn seeded<R: Rng>(
        dims: &[usize],
        hidden_act: Activation,
        output_act: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Shape("need at least input and output dims".into()));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for k in 0..dims.len() - 1 {
            let (input_dim, output_dim) = (dims[k], dims[k + 1]);
            let bound = (6.0 / (input_dim + output_dim) as f64).sqrt();
            let weight: Vec<f64> = (0..input_dim * output_dim)
                .map(|_| rng.gen_range(-bound..bound))
                .collect();
            let act = if k + 2 == dims.len() {
                output_act
            } else {
                hidden_act
            };
            layers.push(DenseLayer::new(
                input_dim,
                output_dim,
                weight,
                vec![0.0; output_dim],
                act,
            )?);
        }
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().output_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Flat parameter access in layer order, weights before bias. Used by the
    /// persistence layer and by finite-difference checks.
    pub fn get_param(&self, mut index: usize) -> f64 {
        for layer in &self.layers {
            if index < layer.weight.len() {
                return layer.weight[index];
            }
            index -= layer.weight.len();
            if index < layer.bias.len() {
                return layer.bias[index];
            }
            index -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut index: usize, value: f64) {
        for layer in &mut self.layers {
            if index < layer.weight.len() {
                layer.weight[index] = value;
                return;
            }
            index -= layer.weight.len();
            if index < layer.bias.len() {
                layer.bias[index] = value;
                return;
            }
            index -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }

    /// FNV-1a over the bit patterns of every parameter; ties a trace to the
    /// parameters it came from.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for layer in &self.layers {
            for v in layer.weight.iter().chain(layer.bias.iter()) {
                for b in v.to_bits().to_le_bytes() {
                    h ^= u64::from(b);
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }
}

/// Per-parameter partials of a scalar loss, shape-congruent with a
/// [`ParameterSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGradient>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl GradientSet {
    pub fn zeros_like(params: &ParameterSet) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weight: vec![0.0; l.weight.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn congruent_with(&self, params: &ParameterSet) -> bool {
        self.layers.len() == params.layers.len()
            && self.layers.iter().zip(params.layers.iter()).all(|(g, l)| {
                g.weight.len() == l.weight.len() && g.bias.len() == l.bias.len()
            })
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.layers.iter_mut().zip(other.layers.iter()) {
            for (x, y) in a.weight.iter_mut().zip(b.weight.iter()) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(b.bias.iter()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            for v in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                *v *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Flat access mirroring [`ParameterSet::get_param`] ordering.
    pub fn get(&self, mut index: usize) -> f64 {
        for layer in &self.layers {
            if index < layer.weight.len() {
                return layer.weight[index];
            }
            index -= layer.weight.len();
            if index < layer.bias.len() {
                return layer.bias[index];
            }
            index -= layer.bias.len();
        }
        panic!("gradient index out of range");
    }
}

/// Activation record from a forward pass: the input of every layer and every
/// pre-activation, plus a checksum of the parameters that produced it.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    layer_inputs: Vec<Vec<f64>>,
    pre_activations: Vec<Vec<f64>>,
    checksum: u64,
}

impl ForwardTrace {
    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre_activations
    }
}

/// Forward pass, returning the output and the trace needed by [`backward`].
pub fn forward(params: &ParameterSet, x: &Tensor) -> Result<(Tensor, ForwardTrace)> {
    let n = x.vector_len()?;
    if n != params.input_dim() {
        return Err(Error::Shape(format!(
            "input length {} does not match first layer input dim {}",
            n,
            params.input_dim()
        )));
    }
    let mut layer_inputs = Vec::with_capacity(params.layers.len());
    let mut pre_activations = Vec::with_capacity(params.layers.len());
    let mut current = x.data().to_vec();
    for layer in &params.layers {
        let mut z = vec![0.0; layer.output_dim];
        layer.affine(&current, &mut z);
        layer_inputs.push(current);
        current = z.iter().map(|&v| layer.activation.apply(v)).collect();
        pre_activations.push(z);
    }
    let trace = ForwardTrace {
        layer_inputs,
        pre_activations,
        checksum: params.checksum(),
    };
    Ok((Tensor::from_computed(vec![current.len()], current), trace))
}

/// Forward pass without keeping the trace.
pub fn evaluate(params: &ParameterSet, x: &Tensor) -> Result<Tensor> {
    forward(params, x).map(|(out, _)| out)
}

/// Reverse-mode pass. Returns the parameter gradient and the gradient with
/// respect to the input (which is what the attacks consume).
pub fn backward(
    params: &ParameterSet,
    trace: &ForwardTrace,
    grad_output: &Tensor,
) -> Result<(GradientSet, Tensor)> {
    if trace.checksum != params.checksum() {
        return Err(Error::State(
            "trace was recorded from different parameters".into(),
        ));
    }
    let g_len = grad_output.vector_len()?;
    if g_len != params.output_dim() {
        return Err(Error::Shape(format!(
            "grad_output length {} does not match output dim {}",
            g_len,
            params.output_dim()
        )));
    }

    let mut grads = GradientSet::zeros_like(params);
    let mut upstream = grad_output.data().to_vec();
    for (k, layer) in params.layers.iter().enumerate().rev() {
        let z = &trace.pre_activations[k];
        let input = &trace.layer_inputs[k];
        // gz = upstream ⊙ σ'(z)
        let gz: Vec<f64> = upstream
            .iter()
            .zip(z.iter())
            .map(|(u, &zv)| u * layer.activation.derivative(zv))
            .collect();
        let lg = &mut grads.layers[k];
        for (o, &g) in gz.iter().enumerate() {
            lg.bias[o] = g;
            let row = &mut lg.weight[o * layer.input_dim..(o + 1) * layer.input_dim];
            for (w, &xi) in row.iter_mut().zip(input.iter()) {
                *w = g * xi;
            }
        }
        // upstream for the previous layer: Wᵀ gz
        let mut next = vec![0.0; layer.input_dim];
        for (o, &g) in gz.iter().enumerate() {
            let row = &layer.weight[o * layer.input_dim..(o + 1) * layer.input_dim];
            for (n, &w) in next.iter_mut().zip(row.iter()) {
                *n += w * g;
            }
        }
        upstream = next;
    }
    let grad_input = Tensor::from_computed(vec![upstream.len()], upstream);
    Ok((grads, grad_input))
}

/// Numerically stabilized softmax of a 1-D logit vector.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let n = logits.vector_len()?;
    if n == 0 {
        return Err(Error::Shape("softmax of empty logits".into()));
    }
    Ok(Tensor::from_computed(
        vec![n],
        softmax_slice(logits.data()),
    ))
}

pub(crate) fn softmax_slice(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy loss of a logit vector against a class index, together with
/// the gradient with respect to the logits (softmax − one-hot).
pub fn cross_entropy(logits: &Tensor, label: usize) -> Result<(f64, Tensor)> {
    let n = logits.vector_len()?;
    if n == 0 {
        return Err(Error::Shape("cross-entropy of empty logits".into()));
    }
    if label >= n {
        return Err(Error::Index(format!(
            "label {label} out of range for {n} classes"
        )));
    }
    let z = logits.data();
    let max = z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let log_sum: f64 = z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
    let loss = log_sum - z[label];
    let mut grad = softmax_slice(z);
    grad[label] -= 1.0;
    Ok((loss, Tensor::from_computed(vec![n], grad)))
}

/// One plain gradient-descent step: θ' = θ − lr·g, returned as a new set.
pub fn sgd_step(params: &ParameterSet, grads: &GradientSet, lr: f64) -> Result<ParameterSet> {
    if !grads.congruent_with(params) {
        return Err(Error::Shape(
            "gradient set is not congruent with parameters".into(),
        ));
    }
    let layers = params
        .layers
        .iter()
        .zip(grads.layers.iter())
        .map(|(l, g)| DenseLayer {
            weight: l
                .weight
                .iter()
                .zip(g.weight.iter())
                .map(|(w, gw)| w - lr * gw)
                .collect(),
            bias: l
                .bias
                .iter()
                .zip(g.bias.iter())
                .map(|(b, gb)| b - lr * gb)
                .collect(),
            input_dim: l.input_dim,
            output_dim: l.output_dim,
            activation: l.activation,
        })
        .collect();
    Ok(ParameterSet { layers })
}
