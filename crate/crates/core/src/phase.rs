//! Multi-headed phase-shift model.
//!
//! A shared extractor maps the input to a feature vector; each of the M heads
//! is a pair of real-valued classifiers (re, im) whose outputs are combined
//! with a per-head phase factor. With z the scalar projection of the input
//! onto the first principal component, the logits are the real part of
//!
//! ```text
//! Σ_m e^{2πi ω_m z} (H_m^re(f) + i H_m^im(f))
//!   = Σ_m cos(2π ω_m z) H_m^re(f) − sin(2π ω_m z) H_m^im(f)
//! ```
//!
//! Training stays fully real-valued; a head with ω_m = 0 contributes its
//! re-classifier unmodified and its im-classifier not at all. Evaluating the
//! same parameters with every ω_m = 0 gives the zero-frequency model.

use crate::error::{Error, Result};
use crate::net::{self, Activation, GradientSet, ParameterSet};
use crate::tensor::Tensor;
use rand::Rng;
use std::f64::consts::TAU;

/// Unit direction and positive scale used to project inputs to a scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSpec {
    direction: Vec<f64>,
    scale: f64,
}

impl ProjectionSpec {
    pub fn new(direction: Vec<f64>, scale: f64) -> Result<Self> {
        let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "projection direction must be unit-norm (got {norm})"
            )));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Config(format!(
                "projection scale must be positive (got {scale})"
            )));
        }
        Ok(Self { direction, scale })
    }

    /// Normalizes the given direction; errors on a zero vector.
    pub fn from_unnormalized(direction: Vec<f64>, scale: f64) -> Result<Self> {
        let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Degenerate("zero projection direction".into()));
        }
        Self::new(direction.iter().map(|v| v / norm).collect(), scale)
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Config(format!(
                "projection scale must be positive (got {scale})"
            )));
        }
        self.scale = scale;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }
}

/// First principal component of the dataset via seeded power iteration on the
/// mean-centered sample covariance. Runs a fixed number of iterations; the
/// sign is fixed so the largest-magnitude component is positive. The returned
/// spec has scale 1.
pub fn compute_first_pc(dataset: &[Tensor], iters: usize, seed: u64) -> Result<ProjectionSpec> {
    if dataset.len() < 2 {
        return Err(Error::Degenerate(format!(
            "principal component needs at least 2 samples, got {}",
            dataset.len()
        )));
    }
    let dim = dataset[0].vector_len()?;
    for x in dataset {
        if x.vector_len()? != dim {
            return Err(Error::Shape("inconsistent sample dimensions".into()));
        }
    }
    let n = dataset.len() as f64;
    let mut mean = vec![0.0; dim];
    for x in dataset {
        for (m, v) in mean.iter_mut().zip(x.data()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    // Sample covariance, row-major dim×dim.
    let mut cov = vec![0.0; dim * dim];
    for x in dataset {
        let centered: Vec<f64> = x.data().iter().zip(mean.iter()).map(|(v, m)| v - m).collect();
        for i in 0..dim {
            for j in 0..dim {
                cov[i * dim + j] += centered[i] * centered[j];
            }
        }
    }
    for c in &mut cov {
        *c /= n - 1.0;
    }
    let max_entry = cov.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_entry == 0.0 {
        return Err(Error::Degenerate(
            "dataset has zero variance in every direction".into(),
        ));
    }

    let mut rng = crate::seed::stream(seed, "pca-start");
    let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    normalize_or_reset(&mut v, dim, 0);
    for it in 0..iters {
        let mut next = vec![0.0; dim];
        for i in 0..dim {
            let row = &cov[i * dim..(i + 1) * dim];
            next[i] = row.iter().zip(v.iter()).map(|(c, x)| c * x).sum();
        }
        v = next;
        normalize_or_reset(&mut v, dim, it + 1);
    }
    // Sign convention: largest-magnitude component positive.
    let lead = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    if v[lead] < 0.0 {
        for x in &mut v {
            *x = -*x;
        }
    }
    ProjectionSpec::new(v, 1.0)
}

// If power iteration lands in the covariance null space, restart from a basis
// vector chosen by the iteration count so the procedure stays deterministic.
fn normalize_or_reset(v: &mut [f64], dim: usize, it: usize) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-300 {
        for x in v.iter_mut() {
            *x = 0.0;
        }
        v[it % dim] = 1.0;
    } else {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Scalar projection z = scale · (x/‖x‖₂)·p, with z = 0 for x = 0.
pub fn project(x: &Tensor, spec: &ProjectionSpec) -> Result<f64> {
    let n = x.vector_len()?;
    if n != spec.dim() {
        return Err(Error::Shape(format!(
            "input dim {} does not match projection dim {}",
            n,
            spec.dim()
        )));
    }
    let norm = x.l2_norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = x
        .data()
        .iter()
        .zip(spec.direction.iter())
        .map(|(a, b)| a * b)
        .sum();
    Ok(spec.scale * dot / norm)
}

// ∂z/∂x for the projection above; zero at x = 0 by the same convention.
fn project_grad(x: &[f64], spec: &ProjectionSpec) -> Vec<f64> {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    if r2 == 0.0 {
        return vec![0.0; x.len()];
    }
    let r = r2.sqrt();
    let dot: f64 = x.iter().zip(spec.direction.iter()).map(|(a, b)| a * b).sum();
    x.iter()
        .zip(spec.direction.iter())
        .map(|(xi, pi)| spec.scale * (pi / r - dot * xi / (r2 * r)))
        .collect()
}

/// Integer frequency per head; slot 0 is always the zero frequency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyAssignment {
    omegas: Vec<u32>,
}

impl FrequencyAssignment {
    pub fn new(omegas: Vec<u32>) -> Result<Self> {
        if omegas.is_empty() {
            return Err(Error::Config("frequency assignment needs at least one head".into()));
        }
        if omegas[0] != 0 {
            return Err(Error::Config(format!(
                "slot 0 must hold the zero frequency, got {}",
                omegas[0]
            )));
        }
        Ok(Self { omegas })
    }

    pub fn zeros(heads: usize) -> Self {
        Self {
            omegas: vec![0; heads],
        }
    }

    pub fn omegas(&self) -> &[u32] {
        &self.omegas
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn is_all_zero(&self) -> bool {
        self.omegas.iter().all(|&w| w == 0)
    }
}

/// Real/imaginary classifier pair for one head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadPair {
    pub re: ParameterSet,
    pub im: ParameterSet,
}

/// Shared extractor, M classifier head pairs, and the input projection.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseModel {
    extractor: ParameterSet,
    heads: Vec<HeadPair>,
    projection: ProjectionSpec,
}

impl PhaseModel {
    pub fn new(
        extractor: ParameterSet,
        heads: Vec<HeadPair>,
        projection: ProjectionSpec,
    ) -> Result<Self> {
        if heads.is_empty() {
            return Err(Error::Config("model needs at least one head".into()));
        }
        let feature_dim = extractor.output_dim();
        let classes = heads[0].re.output_dim();
        for (m, head) in heads.iter().enumerate() {
            for (tag, side) in [("re", &head.re), ("im", &head.im)] {
                if side.input_dim() != feature_dim {
                    return Err(Error::Shape(format!(
                        "head {m} ({tag}) input dim {} does not match feature dim {feature_dim}",
                        side.input_dim()
                    )));
                }
                if side.output_dim() != classes {
                    return Err(Error::Shape(format!(
                        "head {m} ({tag}) output dim {} does not match class count {classes}",
                        side.output_dim()
                    )));
                }
            }
        }
        if projection.dim() != extractor.input_dim() {
            return Err(Error::Shape(format!(
                "projection dim {} does not match input dim {}",
                projection.dim(),
                extractor.input_dim()
            )));
        }
        Ok(Self {
            extractor,
            heads,
            projection,
        })
    }

    /// Seeded construction: extractor `input_dim -> hidden... `, heads are
    /// single affine layers from the feature dim to the class count.
    pub fn seeded<R: Rng>(
        input_dim: usize,
        hidden: &[usize],
        activation: Activation,
        classes: usize,
        head_count: usize,
        projection: ProjectionSpec,
        rng: &mut R,
    ) -> Result<Self> {
        if hidden.is_empty() {
            return Err(Error::Config("extractor needs at least one hidden layer".into()));
        }
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        let extractor = ParameterSet::seeded(&dims, activation, activation, rng)?;
        let feature_dim = *hidden.last().unwrap();
        let mut heads = Vec::with_capacity(head_count);
        for _ in 0..head_count {
            let re = ParameterSet::seeded(
                &[feature_dim, classes],
                Activation::Identity,
                Activation::Identity,
                rng,
            )?;
            let im = ParameterSet::seeded(
                &[feature_dim, classes],
                Activation::Identity,
                Activation::Identity,
                rng,
            )?;
            heads.push(HeadPair { re, im });
        }
        Self::new(extractor, heads, projection)
    }

    pub fn extractor(&self) -> &ParameterSet {
        &self.extractor
    }

    /// Mutable parameter access (e.g. for finite-difference probes). Traces
    /// recorded before a mutation are invalidated by the checksum guard.
    pub fn extractor_mut(&mut self) -> &mut ParameterSet {
        &mut self.extractor
    }

    pub fn heads(&self) -> &[HeadPair] {
        &self.heads
    }

    pub fn heads_mut(&mut self) -> &mut [HeadPair] {
        &mut self.heads
    }

    pub fn head_count(&self) -> usize {
        self.heads.len()
    }

    pub fn projection(&self) -> &ProjectionSpec {
        &self.projection
    }

    pub fn input_dim(&self) -> usize {
        self.extractor.input_dim()
    }

    pub fn class_count(&self) -> usize {
        self.heads[0].re.output_dim()
    }

    pub fn checksum(&self) -> u64 {
        let mut h = self.extractor.checksum();
        for head in &self.heads {
            h = h.rotate_left(13) ^ head.re.checksum();
            h = h.rotate_left(13) ^ head.im.checksum();
        }
        h
    }

    /// Apply one SGD step to every parameter set, returning the new model.
    pub fn sgd_step(&self, grads: &PhaseGradients, lr: f64) -> Result<PhaseModel> {
        if grads.heads.len() != self.heads.len() {
            return Err(Error::Shape("gradient head count mismatch".into()));
        }
        let extractor = net::sgd_step(&self.extractor, &grads.extractor, lr)?;
        let heads = self
            .heads
            .iter()
            .zip(grads.heads.iter())
            .map(|(head, hg)| {
                Ok(HeadPair {
                    re: net::sgd_step(&head.re, &hg.0, lr)?,
                    im: net::sgd_step(&head.im, &hg.1, lr)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        PhaseModel::new(extractor, heads, self.projection.clone())
    }
}

/// Gradients for every parameter set of a [`PhaseModel`]; heads are (re, im).
#[derive(Debug, Clone)]
pub struct PhaseGradients {
    pub extractor: GradientSet,
    pub heads: Vec<(GradientSet, GradientSet)>,
}

impl PhaseGradients {
    pub fn zeros_like(model: &PhaseModel) -> Self {
        Self {
            extractor: GradientSet::zeros_like(&model.extractor),
            heads: model
                .heads
                .iter()
                .map(|h| {
                    (
                        GradientSet::zeros_like(&h.re),
                        GradientSet::zeros_like(&h.im),
                    )
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &PhaseGradients) {
        self.extractor.add_assign(&other.extractor);
        for (a, b) in self.heads.iter_mut().zip(other.heads.iter()) {
            a.0.add_assign(&b.0);
            a.1.add_assign(&b.1);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.extractor.scale(factor);
        for (re, im) in &mut self.heads {
            re.scale(factor);
            im.scale(factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.extractor.is_finite()
            && self.heads.iter().all(|(re, im)| re.is_finite() && im.is_finite())
    }
}

/// Everything backward needs from a traced forward pass.
#[derive(Debug, Clone)]
pub struct PhaseTrace {
    x: Vec<f64>,
    z: f64,
    omegas: Vec<u32>,
    extractor_trace: net::ForwardTrace,
    head_traces: Vec<(net::ForwardTrace, net::ForwardTrace)>,
    head_outputs: Vec<(Tensor, Tensor)>,
    checksum: u64,
}

impl PhaseTrace {
    pub fn z(&self) -> f64 {
        self.z
    }
}

/// Forward pass with trace retention.
pub fn phase_forward_traced(
    model: &PhaseModel,
    freqs: &FrequencyAssignment,
    x: &Tensor,
) -> Result<(Tensor, PhaseTrace)> {
    if freqs.len() != model.head_count() {
        return Err(Error::Shape(format!(
            "assignment has {} frequencies for {} heads",
            freqs.len(),
            model.head_count()
        )));
    }
    let z = project(x, &model.projection)?;
    let (features, extractor_trace) = net::forward(&model.extractor, x)?;
    let classes = model.class_count();
    let mut logits = vec![0.0; classes];
    let mut head_traces = Vec::with_capacity(model.head_count());
    let mut head_outputs = Vec::with_capacity(model.head_count());
    for (head, &omega) in model.heads.iter().zip(freqs.omegas()) {
        let (re_out, re_trace) = net::forward(&head.re, &features)?;
        let (im_out, im_trace) = net::forward(&head.im, &features)?;
        let theta = TAU * f64::from(omega) * z;
        let (sin, cos) = theta.sin_cos();
        for c in 0..classes {
            logits[c] += cos * re_out.data()[c] - sin * im_out.data()[c];
        }
        head_traces.push((re_trace, im_trace));
        head_outputs.push((re_out, im_out));
    }
    let trace = PhaseTrace {
        x: x.data().to_vec(),
        z,
        omegas: freqs.omegas().to_vec(),
        extractor_trace,
        head_traces,
        head_outputs,
        checksum: model.checksum(),
    };
    Ok((Tensor::from_computed(vec![classes], logits), trace))
}

/// Forward pass without the trace.
pub fn phase_forward(model: &PhaseModel, freqs: &FrequencyAssignment, x: &Tensor) -> Result<Tensor> {
    phase_forward_traced(model, freqs, x).map(|(out, _)| out)
}

/// The zero-frequency model: the same parameters evaluated with every
/// ω_m = 0.
pub fn base_forward(model: &PhaseModel, x: &Tensor) -> Result<Tensor> {
    phase_forward(model, &FrequencyAssignment::zeros(model.head_count()), x)
}

/// Reverse-mode pass through the phase combination, the heads, and the
/// extractor. Returns parameter gradients and the input gradient, which
/// includes the path through z.
pub fn phase_backward(
    model: &PhaseModel,
    trace: &PhaseTrace,
    logit_grad: &Tensor,
) -> Result<(PhaseGradients, Tensor)> {
    if trace.checksum != model.checksum() {
        return Err(Error::State(
            "trace was recorded from a different model state".into(),
        ));
    }
    let classes = model.class_count();
    if logit_grad.vector_len()? != classes {
        return Err(Error::Shape(format!(
            "logit gradient length {} does not match class count {}",
            logit_grad.len(),
            classes
        )));
    }
    let u = logit_grad.data();
    let feature_dim = model.extractor.output_dim();
    let mut feature_grad = vec![0.0; feature_dim];
    let mut dloss_dz = 0.0;
    let mut head_grads = Vec::with_capacity(model.head_count());
    for (m, (head, &omega)) in model.heads.iter().zip(trace.omegas.iter()).enumerate() {
        let theta = TAU * f64::from(omega) * trace.z;
        let (sin, cos) = theta.sin_cos();
        let re_upstream: Vec<f64> = u.iter().map(|g| g * cos).collect();
        let im_upstream: Vec<f64> = u.iter().map(|g| -g * sin).collect();
        let (re_trace, im_trace) = &trace.head_traces[m];
        let (re_grads, re_fgrad) = net::backward(
            &head.re,
            re_trace,
            &Tensor::from_computed(vec![classes], re_upstream),
        )?;
        let (im_grads, im_fgrad) = net::backward(
            &head.im,
            im_trace,
            &Tensor::from_computed(vec![classes], im_upstream),
        )?;
        for ((fg, a), b) in feature_grad
            .iter_mut()
            .zip(re_fgrad.data())
            .zip(im_fgrad.data())
        {
            *fg += a + b;
        }
        // z-path: ∂logit_c/∂z = −2πω sin·re_c − 2πω cos·im_c
        let (re_out, im_out) = &trace.head_outputs[m];
        let factor = TAU * f64::from(omega);
        for c in 0..classes {
            dloss_dz += u[c] * factor * (-sin * re_out.data()[c] - cos * im_out.data()[c]);
        }
        head_grads.push((re_grads, im_grads));
    }
    let (extractor_grads, input_grad_net) = net::backward(
        &model.extractor,
        &trace.extractor_trace,
        &Tensor::from_computed(vec![feature_dim], feature_grad),
    )?;
    let z_grad = project_grad(&trace.x, &model.projection);
    let grad_x: Vec<f64> = input_grad_net
        .data()
        .iter()
        .zip(z_grad.iter())
        .map(|(g, dz)| g + dloss_dz * dz)
        .collect();
    Ok((
        PhaseGradients {
            extractor: extractor_grads,
            heads: head_grads,
        },
        Tensor::from_computed(vec![grad_x.len()], grad_x),
    ))
}
