//! Training loops.
//!
//! The phase-shifted loop processes each batch as: draw a uniform
//! perturbation, take sign-gradient steps against the phase model on
//! even-indexed batches and against its zero-frequency view on odd ones,
//! clip, fold the clean/adversarial Fourier coefficients into the frequency
//! state, sample a fresh head assignment from the induced multinomial, and
//! descend the combined objective (cross-entropy plus the absolute cosine
//! similarity between the phase-shifted and zero-frequency softmax outputs).
//! The iterative variant repeats the perturbation step several times per
//! batch; the standard baseline trains a single zero-frequency head on plain
//! cross-entropy.

use crate::attack::{self, AttackConfig, FixedFrequencyModel, InferenceMode};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::freq::FrequencyState;
use crate::net::{self, cross_entropy, Activation};
use crate::phase::{
    self, compute_first_pc, FrequencyAssignment, PhaseGradients, PhaseModel,
};
use crate::seed;
use crate::spectrum::{self, FilterConfig, GaussianKernel};
use crate::tensor::Tensor;
use rand::seq::SliceRandom;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    PhaseAt,
    PhaseAtIterative,
    StandardAt,
    Clean,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::PhaseAt => "phaseat",
            Variant::PhaseAtIterative => "phaseat-iterative",
            Variant::StandardAt => "standard-at",
            Variant::Clean => "clean",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "phaseat" => Ok(Variant::PhaseAt),
            "phaseat-iterative" => Ok(Variant::PhaseAtIterative),
            "standard-at" => Ok(Variant::StandardAt),
            "clean" => Ok(Variant::Clean),
            _ => Err(Error::Config(format!("unknown variant '{s}'"))),
        }
    }

    pub fn is_phase(self) -> bool {
        matches!(self, Variant::PhaseAt | Variant::PhaseAtIterative)
    }
}

/// Per-epoch spectral analysis settings.
#[derive(Debug, Clone)]
pub struct SpectralPlan {
    pub filter: FilterConfig,
    /// Report every `cadence` epochs (1 = every epoch); the final epoch is
    /// always reported.
    pub cadence: usize,
    /// Analyze perturbed instead of clean training inputs.
    pub adversarial: bool,
}

/// Per-epoch evaluation settings.
#[derive(Debug, Clone)]
pub struct EvalPlan {
    pub attack: Option<AttackConfig>,
    pub inference: InferenceMode,
    /// Cap on the number of test samples used per epoch.
    pub eval_cap: usize,
    pub spectral: Option<SpectralPlan>,
}

impl EvalPlan {
    pub fn none() -> Self {
        Self {
            attack: None,
            inference: InferenceMode::Zero,
            eval_cap: 256,
            spectral: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub variant: Variant,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Training-time attack; `steps` is forced to 1 for the non-iterative
    /// variants and read as the inner step count P for the iterative one.
    pub attack: AttackConfig,
    pub head_count: usize,
    pub k_max: usize,
    pub ema_decay: f64,
    pub scale_c: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub pca_iters: usize,
    pub seed: u64,
    pub eval: EvalPlan,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.head_count < 1 {
            return Err(Error::Config("head count must be at least 1".into()));
        }
        if self.k_max < 1 {
            return Err(Error::Config("k_max must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::Config(format!(
                "EMA decay must lie in [0, 1), got {}",
                self.ema_decay
            )));
        }
        if !(self.scale_c > 0.0) || !self.scale_c.is_finite() {
            return Err(Error::Config(format!(
                "projection scale must be positive, got {}",
                self.scale_c
            )));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if self.pca_iters < 1 {
            return Err(Error::Config("power-iteration count must be at least 1".into()));
        }
        self.attack.validate()?;
        if self.variant == Variant::PhaseAt && self.attack.steps != 1 {
            return Err(Error::Config(
                "the non-iterative variant uses a single perturbation step".into(),
            ));
        }
        if let Some(eval_attack) = &self.eval.attack {
            eval_attack.validate()?;
        }
        if let Some(spectral) = &self.eval.spectral {
            spectral.filter.validate()?;
            if spectral.cadence < 1 {
                return Err(Error::Config("spectral cadence must be at least 1".into()));
            }
        }
        Ok(())
    }
}

/// One row of training metrics. NaN marks values that were not computed
/// (no evaluation attack, no spectral report this epoch) or were undefined.
#[derive(Debug, Clone)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub clean_acc: f64,
    pub robust_acc: f64,
    pub e_low: f64,
    pub e_high: f64,
    /// Counts of sampled head frequencies (slots 1..M) this epoch.
    pub freq_histogram: Vec<u64>,
}

/// Batch-level events, in execution order, for algorithm-fidelity checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainEvent {
    EpochStart { epoch: usize },
    DeltaInit,
    AttackStep { target_zero: bool },
    Clip,
    DiscrepancyUpdate,
    FrequencySample,
    ParameterStep,
}

#[derive(Debug)]
pub struct TrainOutput {
    pub model: PhaseModel,
    pub state: FrequencyState,
    pub metrics: Vec<EpochMetrics>,
    pub events: Vec<TrainEvent>,
    /// Mean objective regularizer of every batch, in batch order (empty for
    /// the standard/clean variants, which do not use the regularizer).
    pub batch_regularizers: Vec<f64>,
    /// Largest ‖Δ‖∞ seen across all training perturbations.
    pub max_delta_linf: f64,
}

/// Hook invoked after each epoch with the live model and state.
pub trait EpochSink {
    fn on_epoch(&mut self, metrics: &EpochMetrics, model: &PhaseModel, state: &FrequencyState);
}

struct NullSink;

impl EpochSink for NullSink {
    fn on_epoch(&mut self, _: &EpochMetrics, _: &PhaseModel, _: &FrequencyState) {}
}

/// Breakdown of the training objective for one sample.
#[derive(Debug, Clone, Copy)]
pub struct AdvLoss {
    pub total: f64,
    pub cross_entropy: f64,
    pub regularizer: f64,
}

/// Objective value: cross-entropy of the phase-shifted logits plus the
/// absolute cosine similarity between the phase-shifted and zero-frequency
/// softmax outputs (both evaluated on the same parameters).
pub fn adv_loss(
    model: &PhaseModel,
    freqs: &FrequencyAssignment,
    x_adv: &Tensor,
    label: usize,
) -> Result<AdvLoss> {
    let logits = phase::phase_forward(model, freqs, x_adv)?;
    let logits_zero = phase::base_forward(model, x_adv)?;
    let (ce, _) = cross_entropy(&logits, label)?;
    let a = net::softmax(&logits)?;
    let b = net::softmax(&logits_zero)?;
    let regularizer = cosine_similarity(a.data(), b.data()).abs();
    Ok(AdvLoss {
        total: ce + regularizer,
        cross_entropy: ce,
        regularizer,
    })
}

fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

// Gradient of |cos(a, b)| with respect to `a` (holding b fixed):
// sign(cos)·(b/(‖a‖‖b‖) − cos·a/‖a‖²).
fn abs_cosine_grad_wrt_a(a: &[f64], b: &[f64]) -> Vec<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na2: f64 = a.iter().map(|x| x * x).sum();
    let nb2: f64 = b.iter().map(|x| x * x).sum();
    let (na, nb) = (na2.sqrt(), nb2.sqrt());
    let cos = dot / (na * nb);
    let sgn = if cos >= 0.0 { 1.0 } else { -1.0 };
    a.iter()
        .zip(b)
        .map(|(&ai, &bi)| sgn * (bi / (na * nb) - cos * ai / na2))
        .collect()
}

// Pull a gradient w.r.t. softmax outputs back to the logits:
// J_softmax · g = p ⊙ g − p (p·g).
fn softmax_pullback(p: &[f64], g: &[f64]) -> Vec<f64> {
    let pg: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
    p.iter().zip(g).map(|(&pi, &gi)| pi * (gi - pg)).collect()
}

/// Objective gradient for one sample, flowing through both the phase-shifted
/// path and the zero-frequency path (shared parameters, no stop-gradient).
/// When `with_regularizer` is false this is plain cross-entropy.
pub fn adv_loss_grad(
    model: &PhaseModel,
    freqs: &FrequencyAssignment,
    x_adv: &Tensor,
    label: usize,
    with_regularizer: bool,
) -> Result<(AdvLoss, PhaseGradients)> {
    let (logits, trace) = phase::phase_forward_traced(model, freqs, x_adv)?;
    let (ce, ce_grad) = cross_entropy(&logits, label)?;
    if !with_regularizer {
        let (grads, _) = phase::phase_backward(model, &trace, &ce_grad)?;
        return Ok((
            AdvLoss {
                total: ce,
                cross_entropy: ce,
                regularizer: f64::NAN,
            },
            grads,
        ));
    }
    let zero = FrequencyAssignment::zeros(model.head_count());
    let (logits_zero, trace_zero) = phase::phase_forward_traced(model, &zero, x_adv)?;
    let a = net::softmax_slice(logits.data());
    let b = net::softmax_slice(logits_zero.data());
    let regularizer = cosine_similarity(&a, &b).abs();

    let reg_grad_a = abs_cosine_grad_wrt_a(&a, &b);
    let reg_grad_b = abs_cosine_grad_wrt_a(&b, &a);
    let reg_logit_grad = softmax_pullback(&a, &reg_grad_a);
    let reg_logit_grad_zero = softmax_pullback(&b, &reg_grad_b);

    let classes = model.class_count();
    let upstream: Vec<f64> = ce_grad
        .data()
        .iter()
        .zip(reg_logit_grad.iter())
        .map(|(c, r)| c + r)
        .collect();
    let (mut grads, _) = phase::phase_backward(
        model,
        &trace,
        &Tensor::from_computed(vec![classes], upstream),
    )?;
    let (grads_zero, _) = phase::phase_backward(
        model,
        &trace_zero,
        &Tensor::from_computed(vec![classes], reg_logit_grad_zero),
    )?;
    grads.add_assign(&grads_zero);
    Ok((
        AdvLoss {
            total: ce + regularizer,
            cross_entropy: ce,
            regularizer,
        },
        grads,
    ))
}

/// Dispatch on the configured variant.
pub fn train(cfg: &TrainConfig, train_set: &Dataset, test_set: &Dataset) -> Result<TrainOutput> {
    train_with_sink(cfg, train_set, test_set, &mut NullSink)
}

pub fn train_with_sink(
    cfg: &TrainConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    sink: &mut dyn EpochSink,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if test_set.is_empty() {
        return Err(Error::Config("test set is empty".into()));
    }
    match cfg.variant {
        Variant::PhaseAt | Variant::PhaseAtIterative => run_loop(cfg, train_set, test_set, sink),
        Variant::StandardAt | Variant::Clean => {
            // The baselines are a single zero-frequency head trained on plain
            // cross-entropy; "clean" additionally zeroes the perturbation
            // budget, which reduces the loop to standard training.
            let mut cfg = cfg.clone();
            cfg.head_count = 1;
            if cfg.variant == Variant::Clean {
                cfg.attack.epsilon = 0.0;
            }
            run_loop(&cfg, train_set, test_set, sink)
        }
    }
}

/// Single-step phase-shifted loop per the spec signature.
pub fn train_phaseat(cfg: &TrainConfig, train_set: &Dataset, test_set: &Dataset) -> Result<TrainOutput> {
    let mut cfg = cfg.clone();
    cfg.variant = Variant::PhaseAt;
    train(&cfg, train_set, test_set)
}

/// Iterative variant: the inner perturbation step runs `cfg.attack.steps`
/// times per batch, with the parity alternation applied to the whole inner
/// loop.
pub fn train_phaseat_iterative(
    cfg: &TrainConfig,
    train_set: &Dataset,
    test_set: &Dataset,
) -> Result<TrainOutput> {
    let mut cfg = cfg.clone();
    cfg.variant = Variant::PhaseAtIterative;
    train(&cfg, train_set, test_set)
}

/// Standard adversarial-training baseline (single head, plain cross-entropy).
pub fn train_standard_at(
    cfg: &TrainConfig,
    train_set: &Dataset,
    test_set: &Dataset,
) -> Result<TrainOutput> {
    let mut cfg = cfg.clone();
    cfg.variant = Variant::StandardAt;
    train(&cfg, train_set, test_set)
}

fn run_loop(
    cfg: &TrainConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    sink: &mut dyn EpochSink,
) -> Result<TrainOutput> {
    let is_phase = cfg.variant.is_phase();
    let projection = compute_first_pc(
        &train_set.inputs,
        cfg.pca_iters,
        seed::derive(cfg.seed, "init"),
    )?
    .with_scale(cfg.scale_c)?;
    let mut init_rng = seed::stream(cfg.seed, "init");
    let mut model = PhaseModel::seeded(
        train_set.input_dim,
        &cfg.hidden,
        cfg.activation,
        train_set.num_classes,
        cfg.head_count,
        projection,
        &mut init_rng,
    )?;
    let mut state = FrequencyState::new(cfg.k_max, cfg.ema_decay, train_set.num_classes)?;
    let mut freqs = FrequencyAssignment::zeros(cfg.head_count);

    let mut data_rng = seed::stream(cfg.seed, "data");
    let mut freq_rng = seed::stream(cfg.seed, "frequency-sampling");
    let attack_master = seed::derive(cfg.seed, "attack");

    let mut events = Vec::new();
    let mut batch_regularizers = Vec::new();
    let mut metrics = Vec::new();
    let mut max_delta_linf = 0.0f64;
    let mut attack_counter = 0u64;

    // Spectral kernel over (possibly subsampled) clean training points is
    // reused across epochs; the adversarial switch re-filters per epoch on
    // moving points instead.
    let spectral_cache = match &cfg.eval.spectral {
        Some(plan) if !plan.adversarial => {
            let idx = spectrum::subsample_indices(train_set.len(), &plan.filter);
            let points: Vec<Tensor> = idx.iter().map(|&i| train_set.inputs[i].clone()).collect();
            let kernel = GaussianKernel::new(&points, &plan.filter)?;
            Some((idx, points, kernel))
        }
        _ => None,
    };

    for epoch in 0..cfg.epochs {
        events.push(TrainEvent::EpochStart { epoch });
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut data_rng);

        let mut epoch_loss = 0.0;
        let mut batch_count = 0usize;
        let mut histogram = vec![0u64; cfg.k_max];

        for (batch_index, batch_ids) in order.chunks(cfg.batch_size).enumerate() {
            let target_zero = batch_index % 2 != 0;
            let attack_freqs = if target_zero || !is_phase {
                FrequencyAssignment::zeros(cfg.head_count)
            } else {
                freqs.clone()
            };

            // Perturbation: uniform init, sign step(s), clip after each step.
            events.push(TrainEvent::DeltaInit);
            let mut adversarial = Vec::with_capacity(batch_ids.len());
            for &i in batch_ids {
                let x = &train_set.inputs[i];
                if cfg.attack.epsilon == 0.0 {
                    // Δ = 0 path: nothing to perturb.
                    adversarial.push(x.clone());
                    continue;
                }
                let y = train_set.labels[i];
                let mut rng = seed::stream_indexed(attack_master, "sample", attack_counter);
                attack_counter += 1;
                let mut target = FixedFrequencyModel::new(&model, attack_freqs.clone());
                let p = attack::pgd(&mut target, x, y, &cfg.attack, &mut rng)?;
                max_delta_linf = max_delta_linf.max(p.final_delta.linf_norm());
                let x_adv: Vec<f64> = x
                    .data()
                    .iter()
                    .zip(p.final_delta.data())
                    .map(|(a, b)| a + b)
                    .collect();
                adversarial.push(Tensor::from_computed(vec![x_adv.len()], x_adv));
            }
            for _ in 0..cfg.attack.steps {
                events.push(TrainEvent::AttackStep { target_zero });
                events.push(TrainEvent::Clip);
            }

            if is_phase {
                let clean: Vec<Tensor> = batch_ids
                    .iter()
                    .map(|&i| train_set.inputs[i].clone())
                    .collect();
                state.update_discrepancy(&clean, &adversarial, &model, &freqs)?;
                events.push(TrainEvent::DiscrepancyUpdate);
                freqs = state.sample_frequencies(cfg.head_count, &mut freq_rng);
                events.push(TrainEvent::FrequencySample);
                for &w in &freqs.omegas()[1..] {
                    histogram[w as usize] += 1;
                }
            }

            // Parameter step on the batch-mean objective under the freshly
            // sampled assignment.
            let mut grads = PhaseGradients::zeros_like(&model);
            let mut batch_loss = 0.0;
            let mut batch_reg = 0.0;
            for (&i, x_adv) in batch_ids.iter().zip(adversarial.iter()) {
                let y = train_set.labels[i];
                let (loss, g) = adv_loss_grad(&model, &freqs, x_adv, y, is_phase)?;
                batch_loss += loss.total;
                batch_reg += loss.regularizer;
                grads.add_assign(&g);
            }
            let inv = 1.0 / batch_ids.len() as f64;
            batch_loss *= inv;
            grads.scale(inv);
            if !batch_loss.is_finite() || !grads.is_finite() {
                return Err(Error::NumericBlowup {
                    epoch,
                    detail: format!("batch {batch_index} loss {batch_loss}"),
                });
            }
            model = model.sgd_step(&grads, cfg.learning_rate)?;
            events.push(TrainEvent::ParameterStep);
            if is_phase {
                batch_regularizers.push(batch_reg * inv);
            }
            epoch_loss += batch_loss;
            batch_count += 1;
        }

        let row = epoch_metrics(
            cfg,
            epoch,
            epoch_loss / batch_count.max(1) as f64,
            histogram,
            &model,
            &state,
            train_set,
            test_set,
            spectral_cache.as_ref(),
            attack_master,
        )?;
        sink.on_epoch(&row, &model, &state);
        metrics.push(row);
    }

    Ok(TrainOutput {
        model,
        state,
        metrics,
        events,
        batch_regularizers,
        max_delta_linf,
    })
}

#[allow(clippy::too_many_arguments)]
fn epoch_metrics(
    cfg: &TrainConfig,
    epoch: usize,
    train_loss: f64,
    freq_histogram: Vec<u64>,
    model: &PhaseModel,
    state: &FrequencyState,
    train_set: &Dataset,
    test_set: &Dataset,
    spectral_cache: Option<&(Vec<usize>, Vec<Tensor>, GaussianKernel)>,
    attack_master: u64,
) -> Result<EpochMetrics> {
    let cap = cfg.eval.eval_cap.max(1).min(test_set.len());
    let eval_seed = seed::derive_indexed(cfg.seed, "eval", epoch as u64);

    let mut clean_hits = 0usize;
    for i in 0..cap {
        let mut rng = seed::stream_indexed(eval_seed, "eval", i as u64);
        let pred = attack::infer(model, state, &test_set.inputs[i], cfg.eval.inference, &mut rng)?;
        clean_hits += usize::from(pred == test_set.labels[i]);
    }
    let clean_acc = clean_hits as f64 / cap as f64;

    let robust_acc = if let Some(attack_cfg) = &cfg.eval.attack {
        let mut attack_cfg = attack_cfg.clone();
        attack_cfg.seed = seed::derive_indexed(cfg.seed, "eval-attack", epoch as u64);
        let eval = attack::evaluate_robust_accuracy(
            model,
            state,
            &test_set.inputs[..cap],
            &test_set.labels[..cap],
            &attack_cfg,
            cfg.eval.inference,
            eval_seed,
        )?;
        eval.robust_accuracy
    } else {
        f64::NAN
    };

    let (e_low, e_high) = match &cfg.eval.spectral {
        Some(plan) if epoch % plan.cadence == 0 || epoch + 1 == cfg.epochs => {
            let report = spectral_report(cfg, plan, model, train_set, spectral_cache, attack_master, epoch)?;
            (report.0, report.1)
        }
        _ => (f64::NAN, f64::NAN),
    };

    Ok(EpochMetrics {
        epoch,
        train_loss,
        clean_acc,
        robust_acc,
        e_low,
        e_high,
        freq_histogram,
    })
}

fn spectral_report(
    cfg: &TrainConfig,
    plan: &SpectralPlan,
    model: &PhaseModel,
    train_set: &Dataset,
    cache: Option<&(Vec<usize>, Vec<Tensor>, GaussianKernel)>,
    attack_master: u64,
    epoch: usize,
) -> Result<(f64, f64)> {
    let one_hot = train_set.one_hot_labels();
    let outputs_for = |points: &[Tensor]| -> Result<Vec<Vec<f64>>> {
        points
            .iter()
            .map(|x| {
                let logits = phase::base_forward(model, x)?;
                Ok(net::softmax_slice(logits.data()))
            })
            .collect()
    };
    let report = if let Some((idx, points, kernel)) = cache {
        let labels: Vec<Vec<f64>> = idx.iter().map(|&i| one_hot[i].clone()).collect();
        let outputs = outputs_for(points)?;
        spectrum::frequency_errors_with_kernel(kernel, &labels, &outputs, false)?
    } else {
        // Adversarial analysis: perturb the (subsampled) points first.
        let idx = spectrum::subsample_indices(train_set.len(), &plan.filter);
        let mut points = Vec::with_capacity(idx.len());
        for (j, &i) in idx.iter().enumerate() {
            let x = &train_set.inputs[i];
            let y = train_set.labels[i];
            let mut rng = seed::stream_indexed(
                attack_master,
                "spectral",
                (epoch * train_set.len() + j) as u64,
            );
            let mut target = FixedFrequencyModel::zero(model);
            let p = attack::pgd(&mut target, x, y, &cfg.attack, &mut rng)?;
            let x_adv: Vec<f64> = x
                .data()
                .iter()
                .zip(p.final_delta.data())
                .map(|(a, b)| a + b)
                .collect();
            points.push(Tensor::from_computed(vec![x_adv.len()], x_adv));
        }
        let labels: Vec<Vec<f64>> = idx.iter().map(|&i| one_hot[i].clone()).collect();
        let outputs = outputs_for(&points)?;
        let kernel = GaussianKernel::new(&points, &plan.filter)?;
        spectrum::frequency_errors_with_kernel(&kernel, &labels, &outputs, false)?
    };
    Ok((report.e_low, report.e_high))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_sine_mix;
    use crate::net::{DenseLayer, ParameterSet};
    use crate::phase::{HeadPair, ProjectionSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn stub_model(scale: f64, heads: &[(f64, f64, f64, f64)]) -> PhaseModel {
        // Constant extractor features; heads emit fixed per-class constants
        // (re0, re1, im0, im1).
        let extractor = ParameterSet::new(vec![DenseLayer::new(
            2,
            3,
            vec![0.0; 6],
            vec![0.5, -0.1, 0.3],
            Activation::Tanh,
        )
        .unwrap()])
        .unwrap();
        let heads = heads
            .iter()
            .map(|&(re0, re1, im0, im1)| HeadPair {
                re: ParameterSet::new(vec![DenseLayer::new(
                    3,
                    2,
                    vec![0.0; 6],
                    vec![re0, re1],
                    Activation::Identity,
                )
                .unwrap()])
                .unwrap(),
                im: ParameterSet::new(vec![DenseLayer::new(
                    3,
                    2,
                    vec![0.0; 6],
                    vec![im0, im1],
                    Activation::Identity,
                )
                .unwrap()])
                .unwrap(),
            })
            .collect();
        PhaseModel::new(
            extractor,
            heads,
            ProjectionSpec::new(vec![1.0, 0.0], scale).unwrap(),
        )
        .unwrap()
    }

    fn seeded_model(seed: u64, heads: usize) -> PhaseModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let projection = ProjectionSpec::from_unnormalized(vec![0.3, 1.0], 1.0).unwrap();
        PhaseModel::seeded(2, &[6], Activation::Tanh, 2, heads, projection, &mut rng).unwrap()
    }

    #[test]
    fn zero_frequencies_make_regularizer_exactly_one() {
        let model = seeded_model(1, 3);
        let x = Tensor::vector(vec![0.4, -0.2]).unwrap();
        let freqs = FrequencyAssignment::zeros(3);
        let loss = adv_loss(&model, &freqs, &x, 1).unwrap();
        assert!((loss.regularizer - 1.0).abs() < 1e-9);
        assert!((loss.total - loss.cross_entropy - loss.regularizer).abs() < 1e-15);
    }

    #[test]
    fn regularizer_lies_in_unit_interval() {
        for seed in 0..10u64 {
            let model = seeded_model(seed, 3);
            let freqs = FrequencyAssignment::new(vec![0, 1 + (seed % 5) as u32, 7]).unwrap();
            let x = Tensor::vector(vec![0.3 + 0.01 * seed as f64, -0.6]).unwrap();
            let loss = adv_loss(&model, &freqs, &x, 0).unwrap();
            // Softmax outputs are strictly positive, so the cosine is too.
            assert!(loss.regularizer > 0.0 && loss.regularizer <= 1.0);
        }
    }

    #[test]
    fn objective_matches_hand_computed_example() {
        // Stubbed heads: T logits are (re0 − im0', re1 − im1') at z = 0.25
        // with ω = (0, 1); the zero view sums the re-heads.
        let (a0, b0) = (0.9, -0.3);
        let (a1, b1) = (0.2, 0.6);
        let (c1, d1) = (-0.4, 0.8);
        let model = stub_model(0.25, &[(a0, b0, 5.0, -3.0), (a1, b1, c1, d1)]);
        let x = Tensor::vector(vec![2.0, 0.0]).unwrap(); // z = 0.25
        let freqs = FrequencyAssignment::new(vec![0, 1]).unwrap();
        let loss = adv_loss(&model, &freqs, &x, 0).unwrap();

        let t = [a0 - c1, b0 - d1];
        let t0 = [a0 + a1, b0 + b1];
        let ce = (t[0].exp() + t[1].exp()).ln() - t[0];
        let soft = |l: [f64; 2]| {
            let e0 = l[0].exp();
            let e1 = l[1].exp();
            [e0 / (e0 + e1), e1 / (e0 + e1)]
        };
        let (p, q) = (soft(t), soft(t0));
        let dot = p[0] * q[0] + p[1] * q[1];
        let np = (p[0] * p[0] + p[1] * p[1]).sqrt();
        let nq = (q[0] * q[0] + q[1] * q[1]).sqrt();
        let reg = (dot / (np * nq)).abs();
        assert!((loss.cross_entropy - ce).abs() < 1e-12);
        assert!((loss.regularizer - reg).abs() < 1e-12);
        assert!((loss.total - (ce + reg)).abs() < 1e-12);
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        let model = seeded_model(3, 2);
        let x = Tensor::vector(vec![0.5, -0.7]).unwrap();
        let freqs = FrequencyAssignment::new(vec![0, 2]).unwrap();
        let (_, grads) = adv_loss_grad(&model, &freqs, &x, 1, true).unwrap();
        let h = 1e-5;

        let check = |get: &dyn Fn(&PhaseModel) -> &ParameterSet,
                     get_mut: &dyn Fn(&mut PhaseModel) -> &mut ParameterSet,
                     grad_set: &crate::net::GradientSet| {
            for idx in 0..get(&model).param_count() {
                let base = get(&model).get_param(idx);
                let mut plus = model.clone();
                get_mut(&mut plus).set_param(idx, base + h);
                let mut minus = model.clone();
                get_mut(&mut minus).set_param(idx, base - h);
                let lp = adv_loss(&plus, &freqs, &x, 1).unwrap().total;
                let lm = adv_loss(&minus, &freqs, &x, 1).unwrap().total;
                let numeric = (lp - lm) / (2.0 * h);
                let analytic = grad_set.get(idx);
                let denom = analytic.abs().max(numeric.abs()).max(1e-7);
                assert!(
                    ((analytic - numeric) / denom).abs() < 1e-4,
                    "idx {idx}: analytic {analytic} numeric {numeric}"
                );
            }
        };
        check(&|m| m.extractor(), &|m| m.extractor_mut(), &grads.extractor);
        for head in 0..2 {
            check(
                &|m| &m.heads()[head].re,
                &move |m| &mut m.heads_mut()[head].re,
                &grads.heads[head].0,
            );
            check(
                &|m| &m.heads()[head].im,
                &move |m| &mut m.heads_mut()[head].im,
                &grads.heads[head].1,
            );
        }
    }

    fn small_cfg(variant: Variant, seed: u64) -> TrainConfig {
        TrainConfig {
            variant,
            epochs: 2,
            batch_size: 8,
            learning_rate: 0.05,
            attack: AttackConfig {
                epsilon: 0.05,
                alpha: 0.0625,
                steps: 1,
                eot_samples: 0,
                mimic_frequency: false,
                seed: 0,
                input_min: -1.0,
                input_max: 1.0,
            },
            head_count: 3,
            k_max: 8,
            ema_decay: 0.9,
            scale_c: 1.0,
            hidden: vec![8, 8],
            activation: Activation::Tanh,
            pca_iters: 50,
            seed,
            eval: EvalPlan::none(),
        }
    }

    fn small_data(seed: u64) -> (Dataset, Dataset) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ds = gen_sine_mix(80, 2, &[1.0, 2.0], 0.0, &mut rng).unwrap();
        let mut split_rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        crate::data::split(&ds, 0.2, &mut split_rng).unwrap()
    }

    #[test]
    fn event_sequence_is_exact_per_batch() {
        let cfg = small_cfg(Variant::PhaseAt, 5);
        let (train_set, test_set) = small_data(5);
        let out = train(&cfg, &train_set, &test_set).unwrap();
        let mut i = 0;
        let events = &out.events;
        for epoch in 0..cfg.epochs {
            assert_eq!(events[i], TrainEvent::EpochStart { epoch });
            i += 1;
            let batches = train_set.len().div_ceil(cfg.batch_size);
            for batch in 0..batches {
                assert_eq!(events[i], TrainEvent::DeltaInit);
                assert_eq!(
                    events[i + 1],
                    TrainEvent::AttackStep {
                        target_zero: batch % 2 != 0
                    }
                );
                assert_eq!(events[i + 2], TrainEvent::Clip);
                assert_eq!(events[i + 3], TrainEvent::DiscrepancyUpdate);
                assert_eq!(events[i + 4], TrainEvent::FrequencySample);
                assert_eq!(events[i + 5], TrainEvent::ParameterStep);
                i += 6;
            }
        }
        assert_eq!(i, events.len());
    }

    #[test]
    fn parity_alternation_targets() {
        let cfg = small_cfg(Variant::PhaseAt, 6);
        let (train_set, test_set) = small_data(6);
        let out = train(&cfg, &train_set, &test_set).unwrap();
        let flags: Vec<bool> = out
            .events
            .iter()
            .filter_map(|e| match e {
                TrainEvent::AttackStep { target_zero } => Some(*target_zero),
                _ => None,
            })
            .collect();
        // Within each epoch the targets alternate (T, T0, T, T0, …).
        let batches = train_set.len().div_ceil(cfg.batch_size);
        for (j, &flag) in flags.iter().enumerate() {
            assert_eq!(flag, (j % batches) % 2 != 0);
        }
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let cfg = small_cfg(Variant::PhaseAt, 7);
        let (train_set, test_set) = small_data(7);
        let a = train(&cfg, &train_set, &test_set).unwrap();
        let b = train(&cfg, &train_set, &test_set).unwrap();
        assert_eq!(a.model.checksum(), b.model.checksum());
        for (ma, mb) in a.metrics.iter().zip(b.metrics.iter()) {
            assert_eq!(ma.train_loss.to_bits(), mb.train_loss.to_bits());
            assert_eq!(ma.clean_acc.to_bits(), mb.clean_acc.to_bits());
        }
    }

    #[test]
    fn iterative_with_one_step_equals_single_step() {
        let cfg = small_cfg(Variant::PhaseAt, 8);
        let mut iter_cfg = cfg.clone();
        iter_cfg.variant = Variant::PhaseAtIterative;
        let (train_set, test_set) = small_data(8);
        let a = train(&cfg, &train_set, &test_set).unwrap();
        let b = train(&iter_cfg, &train_set, &test_set).unwrap();
        assert_eq!(a.model.checksum(), b.model.checksum());
    }

    #[test]
    fn iterative_inner_iterates_respect_budget() {
        let mut cfg = small_cfg(Variant::PhaseAtIterative, 9);
        cfg.attack.steps = 4;
        cfg.attack.alpha = 0.03;
        let (train_set, test_set) = small_data(9);
        let out = train(&cfg, &train_set, &test_set).unwrap();
        assert!(out.max_delta_linf <= cfg.attack.epsilon + 1e-12);
    }

    #[test]
    fn clean_variant_is_standard_at_zero_epsilon() {
        let mut clean_cfg = small_cfg(Variant::Clean, 10);
        clean_cfg.attack.epsilon = 0.2; // variant forces the Δ = 0 path
        let mut std_cfg = small_cfg(Variant::StandardAt, 10);
        std_cfg.attack.epsilon = 0.0;
        let (train_set, test_set) = small_data(10);
        let a = train(&clean_cfg, &train_set, &test_set).unwrap();
        let b = train(&std_cfg, &train_set, &test_set).unwrap();
        assert_eq!(a.model.checksum(), b.model.checksum());
        assert_eq!(a.max_delta_linf, 0.0);
    }

    #[test]
    fn standard_variant_uses_single_head_and_no_regularizer() {
        let cfg = small_cfg(Variant::StandardAt, 11);
        let (train_set, test_set) = small_data(11);
        let out = train(&cfg, &train_set, &test_set).unwrap();
        assert_eq!(out.model.head_count(), 1);
        assert!(out.batch_regularizers.is_empty());
        assert!(out
            .events
            .iter()
            .all(|e| !matches!(e, TrainEvent::DiscrepancyUpdate | TrainEvent::FrequencySample)));
    }

    #[test]
    fn logged_regularizers_stay_in_bounds() {
        let cfg = small_cfg(Variant::PhaseAt, 12);
        let (train_set, test_set) = small_data(12);
        let out = train(&cfg, &train_set, &test_set).unwrap();
        assert!(!out.batch_regularizers.is_empty());
        for &r in &out.batch_regularizers {
            assert!(r > 0.0 && r <= 1.0 + 1e-12, "regularizer {r}");
        }
    }

    #[test]
    fn single_head_training_has_unit_regularizer() {
        let mut cfg = small_cfg(Variant::PhaseAt, 13);
        cfg.head_count = 1;
        let (train_set, test_set) = small_data(13);
        let out = train(&cfg, &train_set, &test_set).unwrap();
        for &r in &out.batch_regularizers {
            assert!((r - 1.0).abs() < 1e-9, "regularizer {r}");
        }
    }

    #[test]
    fn inference_modes() {
        let model = seeded_model(44, 3);
        let state = FrequencyState::new(8, 0.9, 2).unwrap();
        let x = Tensor::vector(vec![0.2, 0.7]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let zero_pred = attack::infer(&model, &state, &x, InferenceMode::Zero, &mut rng).unwrap();
        let logits = phase::base_forward(&model, &x).unwrap();
        let expect = if logits.data()[0] >= logits.data()[1] { 0 } else { 1 };
        assert_eq!(zero_pred, expect);

        let fixed = InferenceMode::FixedSeed(9);
        let a = attack::infer(&model, &state, &x, fixed, &mut rng).unwrap();
        let b = attack::infer(&model, &state, &x, fixed, &mut rng).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let (train_set, test_set) = small_data(14);
        let mut cfg = small_cfg(Variant::PhaseAt, 14);
        cfg.learning_rate = 0.0;
        assert!(train(&cfg, &train_set, &test_set).is_err());
        let mut cfg = small_cfg(Variant::PhaseAt, 14);
        cfg.ema_decay = 1.0;
        assert!(train(&cfg, &train_set, &test_set).is_err());
        let mut cfg = small_cfg(Variant::PhaseAt, 14);
        cfg.attack.steps = 3;
        assert!(train(&cfg, &train_set, &test_set).is_err());
        let mut cfg = small_cfg(Variant::PhaseAt, 14);
        cfg.head_count = 0;
        assert!(train(&cfg, &train_set, &test_set).is_err());
    }
}
