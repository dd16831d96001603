//! L∞-bounded gradient attacks and robust-accuracy evaluation.
//!
//! The single-step attack draws a uniform start in the ε-ball, takes one
//! sign step of the cross-entropy input gradient, and re-projects; the
//! multi-step variant repeats the step, re-projecting each time. Both clamp
//! the perturbed input to the valid input range after every projection and
//! record the best-loss iterate alongside the final one.
//!
//! Attack targets are "stochastic models": a fixed-frequency model is the
//! degenerate deterministic case, while the adaptive attacks draw a fresh
//! frequency assignment per query — either uniformly over the frequency
//! range or, when mimicking the defense, from the defender's own multinomial
//! — and may average gradients over several draws
//! (expectation-over-transformation).

use crate::error::{Error, Result};
use crate::freq::FrequencyState;
use crate::net::cross_entropy;
use crate::phase::{self, FrequencyAssignment, PhaseModel};
use crate::seed;
use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Attack hyper-parameters. `steps = 1` is the single-step attack;
/// `eot_samples = 0` disables gradient averaging; `mimic_frequency` draws
/// attack frequencies from the defender's multinomial instead of uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub epsilon: f64,
    pub alpha: f64,
    pub steps: usize,
    pub eot_samples: usize,
    pub mimic_frequency: bool,
    pub seed: u64,
    /// Valid input range; perturbed inputs are clamped into it.
    pub input_min: f64,
    pub input_max: f64,
}

impl AttackConfig {
    /// Training-time single-step defaults (ε = 0.031, α = 0.039 on [0,1]
    /// inputs).
    pub fn fgsm_train_default() -> Self {
        Self {
            epsilon: 0.031,
            alpha: 0.039,
            steps: 1,
            eot_samples: 0,
            mimic_frequency: false,
            seed: 0,
            input_min: 0.0,
            input_max: 1.0,
        }
    }

    /// Evaluation defaults: 50 steps at α = ε/4, one restart.
    pub fn pgd_eval_default(epsilon: f64) -> Self {
        Self {
            epsilon,
            alpha: epsilon / 4.0,
            steps: 50,
            eot_samples: 0,
            mimic_frequency: false,
            seed: 0,
            input_min: 0.0,
            input_max: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Config(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        if self.steps < 1 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.input_min < self.input_max) {
            return Err(Error::Config(format!(
                "input range [{}, {}] is empty",
                self.input_min, self.input_max
            )));
        }
        Ok(())
    }
}

/// Result of one attack: both the final iterate and the best-loss iterate.
/// Evaluation uses the best-loss iterate (strongest-attack convention);
/// training consumes the final one.
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub final_delta: Tensor,
    pub final_loss: f64,
    pub best_delta: Tensor,
    pub best_loss: f64,
}

/// An attack target: a (possibly stochastic) classifier queried for the
/// cross-entropy loss and its input gradient. Deterministic targets simply
/// ignore their internal randomness.
pub trait StochasticModel {
    fn loss_grad(&mut self, x: &Tensor, label: usize) -> Result<(f64, Tensor)>;

    fn loss(&mut self, x: &Tensor, label: usize) -> Result<f64> {
        self.loss_grad(x, label).map(|(l, _)| l)
    }

    /// Class prediction from one query.
    fn predict(&mut self, x: &Tensor) -> Result<usize>;
}

/// The phase model evaluated with a fixed frequency assignment.
pub struct FixedFrequencyModel<'a> {
    model: &'a PhaseModel,
    freqs: FrequencyAssignment,
}

impl<'a> FixedFrequencyModel<'a> {
    pub fn new(model: &'a PhaseModel, freqs: FrequencyAssignment) -> Self {
        Self { model, freqs }
    }

    /// The zero-frequency target.
    pub fn zero(model: &'a PhaseModel) -> Self {
        Self::new(model, FrequencyAssignment::zeros(model.head_count()))
    }
}

impl StochasticModel for FixedFrequencyModel<'_> {
    fn loss_grad(&mut self, x: &Tensor, label: usize) -> Result<(f64, Tensor)> {
        let (logits, trace) = phase::phase_forward_traced(self.model, &self.freqs, x)?;
        let (loss, logit_grad) = cross_entropy(&logits, label)?;
        let (_, grad_x) = phase::phase_backward(self.model, &trace, &logit_grad)?;
        Ok((loss, grad_x))
    }

    fn predict(&mut self, x: &Tensor) -> Result<usize> {
        let logits = phase::phase_forward(self.model, &self.freqs, x)?;
        Ok(argmax(logits.data()))
    }
}

/// How a stochastic target draws its frequency assignment per query.
#[derive(Debug, Clone)]
enum FrequencyDraw {
    Uniform { k_max: usize },
    Multinomial(FrequencyState),
}

/// A target that samples a fresh frequency assignment on every query.
pub struct SampledFrequencyModel<'a> {
    model: &'a PhaseModel,
    draw: FrequencyDraw,
    rng: ChaCha8Rng,
}

impl<'a> SampledFrequencyModel<'a> {
    /// Attacker's guess when the defender's distribution is unknown:
    /// uniform over the frequency range.
    pub fn uniform(model: &'a PhaseModel, k_max: usize, seed: u64) -> Self {
        Self {
            model,
            draw: FrequencyDraw::Uniform { k_max: k_max.max(1) },
            rng: seed::stream(seed, "attack-uniform-freq"),
        }
    }

    fn sample(&mut self) -> FrequencyAssignment {
        let heads = self.model.head_count();
        match &self.draw {
            FrequencyDraw::Uniform { k_max } => {
                let mut omegas = vec![0u32; heads];
                for slot in omegas.iter_mut().skip(1) {
                    *slot = self.rng.gen_range(0..*k_max) as u32;
                }
                FrequencyAssignment::new(omegas).expect("slot 0 is zero")
            }
            FrequencyDraw::Multinomial(state) => state.sample_frequencies(heads, &mut self.rng),
        }
    }
}

/// White-box adaptive sampler that mimics the defender's frequency-selection
/// strategy: each invocation draws from the same multinomial the defense
/// samples from.
pub fn mimic_frequency_sampler<'a>(
    state: &FrequencyState,
    model: &'a PhaseModel,
    seed: u64,
) -> SampledFrequencyModel<'a> {
    SampledFrequencyModel {
        model,
        draw: FrequencyDraw::Multinomial(state.clone()),
        rng: seed::stream(seed, "attack-mimic-freq"),
    }
}

impl StochasticModel for SampledFrequencyModel<'_> {
    fn loss_grad(&mut self, x: &Tensor, label: usize) -> Result<(f64, Tensor)> {
        let freqs = self.sample();
        let (logits, trace) = phase::phase_forward_traced(self.model, &freqs, x)?;
        let (loss, logit_grad) = cross_entropy(&logits, label)?;
        let (_, grad_x) = phase::phase_backward(self.model, &trace, &logit_grad)?;
        Ok((loss, grad_x))
    }

    fn predict(&mut self, x: &Tensor) -> Result<usize> {
        let freqs = self.sample();
        let logits = phase::phase_forward(self.model, &freqs, x)?;
        Ok(argmax(logits.data()))
    }
}

/// Mean input gradient over `n` draws of the target's randomness. For a
/// deterministic target this equals the single-query gradient for any n.
pub fn eot_gradient(
    target: &mut dyn StochasticModel,
    x: &Tensor,
    label: usize,
    n: usize,
) -> Result<Tensor> {
    eot_loss_grad(target, x, label, n).map(|(_, g)| g)
}

fn eot_loss_grad(
    target: &mut dyn StochasticModel,
    x: &Tensor,
    label: usize,
    n: usize,
) -> Result<(f64, Tensor)> {
    if n < 1 {
        return Err(Error::Config("EOT sample count must be at least 1".into()));
    }
    let mut mean_loss = 0.0;
    let mut mean_grad = vec![0.0; x.len()];
    for _ in 0..n {
        let (loss, grad) = target.loss_grad(x, label)?;
        mean_loss += loss;
        for (m, g) in mean_grad.iter_mut().zip(grad.data()) {
            *m += g;
        }
    }
    let inv = 1.0 / n as f64;
    mean_loss *= inv;
    for m in &mut mean_grad {
        *m *= inv;
    }
    Ok((mean_loss, Tensor::from_computed(vec![x.len()], mean_grad)))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

// One sign step followed by projection to the ε-ball and input-range clamp.
pub(crate) fn step_and_project(
    delta: &[f64],
    grad: &[f64],
    x: &[f64],
    alpha: f64,
    epsilon: f64,
    input_min: f64,
    input_max: f64,
) -> Vec<f64> {
    delta
        .iter()
        .zip(grad.iter())
        .zip(x.iter())
        .map(|((&d, &g), &xi)| {
            let stepped = (d + alpha * sign(g)).clamp(-epsilon, epsilon);
            (xi + stepped).clamp(input_min, input_max) - xi
        })
        .collect()
}

fn perturbed(x: &Tensor, delta: &[f64]) -> Tensor {
    let data: Vec<f64> = x.data().iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
    Tensor::from_computed(vec![data.len()], data)
}

/// Multi-step sign attack with uniform initialization in the ε-ball,
/// re-projection after every step, and best-loss iterate tracking.
pub fn pgd(
    target: &mut dyn StochasticModel,
    x: &Tensor,
    label: usize,
    cfg: &AttackConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Perturbation> {
    cfg.validate()?;
    let n = x.vector_len()?;
    let eot = cfg.eot_samples.max(1);
    let mut delta: Vec<f64> = if cfg.epsilon == 0.0 {
        vec![0.0; n]
    } else {
        x.data()
            .iter()
            .map(|&xi| {
                let d: f64 = rng.gen_range(-cfg.epsilon..=cfg.epsilon);
                (xi + d).clamp(cfg.input_min, cfg.input_max) - xi
            })
            .collect()
    };
    let mut best_delta = delta.clone();
    let mut best_loss = f64::NEG_INFINITY;
    for _ in 0..cfg.steps {
        let (loss, grad) = eot_loss_grad(target, &perturbed(x, &delta), label, eot)?;
        if loss > best_loss {
            best_loss = loss;
            best_delta = delta.clone();
        }
        delta = step_and_project(
            &delta,
            grad.data(),
            x.data(),
            cfg.alpha,
            cfg.epsilon,
            cfg.input_min,
            cfg.input_max,
        );
    }
    let (final_loss, _) = eot_loss_grad(target, &perturbed(x, &delta), label, eot)?;
    if final_loss > best_loss {
        best_loss = final_loss;
        best_delta = delta.clone();
    }
    Ok(Perturbation {
        final_delta: Tensor::from_computed(vec![n], delta),
        final_loss,
        best_delta: Tensor::from_computed(vec![n], best_delta),
        best_loss,
    })
}

/// Single-step attack; requires `cfg.steps == 1` and is bit-identical to
/// [`pgd`] with one step.
pub fn fgsm(
    target: &mut dyn StochasticModel,
    x: &Tensor,
    label: usize,
    cfg: &AttackConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Perturbation> {
    if cfg.steps != 1 {
        return Err(Error::Config(format!(
            "single-step attack requires steps = 1, got {}",
            cfg.steps
        )));
    }
    pgd(target, x, label, cfg, rng)
}

/// How the defender predicts during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InferenceMode {
    /// Draw a frequency assignment from the state's multinomial per sample.
    Sampled,
    /// Zero-frequency model.
    Zero,
    /// Sampled with a pinned seed: deterministic across calls.
    FixedSeed(u64),
}

impl InferenceMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sampled" => Ok(InferenceMode::Sampled),
            "zero" => Ok(InferenceMode::Zero),
            "fixed-seed" => Ok(InferenceMode::FixedSeed(0)),
            _ => Err(Error::Config(format!("unknown inference mode '{s}'"))),
        }
    }
}

/// Per-sample evaluation record, one CSV row each.
#[derive(Debug, Clone)]
pub struct SampleRecord {
    pub sample_id: usize,
    pub clean_correct: bool,
    pub adv_correct: bool,
    pub final_loss: f64,
    pub delta_linf: f64,
}

#[derive(Debug, Clone)]
pub struct RobustEval {
    pub clean_accuracy: f64,
    pub robust_accuracy: f64,
    pub records: Vec<SampleRecord>,
}

/// Predict a single input under the given inference mode.
pub fn infer(
    model: &PhaseModel,
    state: &FrequencyState,
    x: &Tensor,
    mode: InferenceMode,
    rng: &mut ChaCha8Rng,
) -> Result<usize> {
    let logits = infer_logits(model, state, x, mode, rng)?;
    Ok(argmax(logits.data()))
}

pub fn infer_logits(
    model: &PhaseModel,
    state: &FrequencyState,
    x: &Tensor,
    mode: InferenceMode,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    match mode {
        InferenceMode::Zero => phase::base_forward(model, x),
        InferenceMode::Sampled => {
            let freqs = state.sample_frequencies(model.head_count(), rng);
            phase::phase_forward(model, &freqs, x)
        }
        InferenceMode::FixedSeed(pin) => {
            let mut pinned = seed::stream(pin, "fixed-seed-inference");
            let freqs = state.sample_frequencies(model.head_count(), &mut pinned);
            phase::phase_forward(model, &freqs, x)
        }
    }
}

/// Attack every sample and measure the fraction still classified correctly
/// under the configured inference mode. The best-loss iterate of each attack
/// is evaluated; clean and adversarial predictions share the same defender
/// draw so the comparison is paired.
pub fn evaluate_robust_accuracy(
    model: &PhaseModel,
    state: &FrequencyState,
    inputs: &[Tensor],
    labels: &[usize],
    cfg: &AttackConfig,
    mode: InferenceMode,
    eval_seed: u64,
) -> Result<RobustEval> {
    if inputs.is_empty() {
        return Err(Error::Shape("empty evaluation dataset".into()));
    }
    if inputs.len() != labels.len() {
        return Err(Error::Shape("inputs and labels are misaligned".into()));
    }
    cfg.validate()?;
    let mut records = Vec::with_capacity(inputs.len());
    let mut clean_hits = 0usize;
    let mut adv_hits = 0usize;
    for (i, (x, &y)) in inputs.iter().zip(labels.iter()).enumerate() {
        let mut attack_rng = seed::stream_indexed(cfg.seed, "attack", i as u64);
        let target_seed = seed::derive_indexed(cfg.seed, "attack-target", i as u64);
        let perturbation = if cfg.mimic_frequency {
            let mut target = mimic_frequency_sampler(state, model, target_seed);
            pgd(&mut target, x, y, cfg, &mut attack_rng)?
        } else if cfg.eot_samples > 0 {
            let mut target = SampledFrequencyModel::uniform(model, state.k_max(), target_seed);
            pgd(&mut target, x, y, cfg, &mut attack_rng)?
        } else {
            let mut target = FixedFrequencyModel::zero(model);
            pgd(&mut target, x, y, cfg, &mut attack_rng)?
        };
        let x_adv = perturbed(x, perturbation.best_delta.data());
        // One defender draw per sample, shared by the clean and adversarial
        // predictions.
        let mut infer_rng = seed::stream_indexed(eval_seed, "eval", i as u64);
        let clean_logits = infer_logits(model, state, x, mode, &mut infer_rng)?;
        let mut infer_rng = seed::stream_indexed(eval_seed, "eval", i as u64);
        let adv_logits = infer_logits(model, state, &x_adv, mode, &mut infer_rng)?;
        let clean_correct = argmax(clean_logits.data()) == y;
        let adv_correct = argmax(adv_logits.data()) == y;
        clean_hits += usize::from(clean_correct);
        adv_hits += usize::from(adv_correct);
        records.push(SampleRecord {
            sample_id: i,
            clean_correct,
            adv_correct,
            final_loss: perturbation.best_loss,
            delta_linf: perturbation.best_delta.linf_norm(),
        });
    }
    let n = inputs.len() as f64;
    Ok(RobustEval {
        clean_accuracy: clean_hits as f64 / n,
        robust_accuracy: adv_hits as f64 / n,
        records,
    })
}
