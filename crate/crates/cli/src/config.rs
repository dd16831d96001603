//! Flat `section.key = value` experiment configuration.
//!
//! One decision per line; `#` starts a comment; unknown keys are rejected.
//! Missing keys fall back to the defaults below, and the assembled
//! configuration is validated before any compute starts.

use crate::{HarnessError, Result};
use phaseat_core::attack::{AttackConfig, InferenceMode};
use phaseat_core::data::Dataset;
use phaseat_core::net::Activation;
use phaseat_core::train::{EvalPlan, SpectralPlan, TrainConfig, Variant};
use phaseat_core::spectrum::FilterConfig;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    SineMix,
    Rings,
    ImageBinary,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::SineMix => "sine-mix",
            DatasetKind::Rings => "rings",
            DatasetKind::ImageBinary => "image-binary",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "sine-mix" => Ok(DatasetKind::SineMix),
            "rings" => Ok(DatasetKind::Rings),
            "image-binary" => Ok(DatasetKind::ImageBinary),
            _ => Err(HarnessError::Config(format!("unknown dataset kind '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalAttackKind {
    None,
    Fgsm,
    Pgd,
}

impl EvalAttackKind {
    pub fn name(self) -> &'static str {
        match self {
            EvalAttackKind::None => "none",
            EvalAttackKind::Fgsm => "fgsm",
            EvalAttackKind::Pgd => "pgd",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(EvalAttackKind::None),
            "fgsm" => Ok(EvalAttackKind::Fgsm),
            "pgd" => Ok(EvalAttackKind::Pgd),
            _ => Err(HarnessError::Config(format!("unknown eval attack '{s}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    // dataset
    pub dataset_kind: DatasetKind,
    pub dataset_n: usize,
    pub dataset_dim: usize,
    pub dataset_noise: f64,
    pub dataset_frequencies: Vec<f64>,
    pub dataset_path: Option<PathBuf>,
    pub test_fraction: f64,
    // model
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub heads: usize,
    pub scale_c: f64,
    // train
    pub variant: Variant,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub k_max: usize,
    pub ema_decay: f64,
    // train-time attack
    pub epsilon: f64,
    pub alpha: f64,
    pub steps: usize,
    pub input_min: Option<f64>,
    pub input_max: Option<f64>,
    // evaluation
    pub eval_attack: EvalAttackKind,
    pub eval_steps: usize,
    pub eval_epsilon: Option<f64>,
    pub eval_alpha: Option<f64>,
    pub eval_eot: usize,
    pub eval_mimic: bool,
    pub eval_cap: usize,
    pub eval_inference: Option<InferenceMode>,
    // analysis
    pub analysis_cadence: usize,
    pub analysis_variance: f64,
    pub analysis_cap: usize,
    pub analysis_adversarial: bool,
    pub analysis_dump: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out_dir: PathBuf::from("runs/experiment"),
            dataset_kind: DatasetKind::SineMix,
            dataset_n: 1000,
            dataset_dim: 2,
            dataset_noise: 0.0,
            dataset_frequencies: vec![1.0, 3.0, 5.0],
            dataset_path: None,
            test_fraction: 0.2,
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            heads: 3,
            scale_c: 1.0,
            variant: Variant::PhaseAt,
            epochs: 30,
            batch_size: 256,
            learning_rate: 0.1,
            k_max: 64,
            ema_decay: 0.9,
            epsilon: 0.031,
            alpha: 0.039,
            steps: 1,
            input_min: None,
            input_max: None,
            eval_attack: EvalAttackKind::Pgd,
            eval_steps: 50,
            eval_epsilon: None,
            eval_alpha: None,
            eval_eot: 0,
            eval_mimic: false,
            eval_cap: 256,
            eval_inference: None,
            analysis_cadence: 1,
            analysis_variance: 3.0,
            analysis_cap: 2048,
            analysis_adversarial: false,
            analysis_dump: false,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| HarnessError::Config(format!("cannot parse '{value}' for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(HarnessError::Config(format!(
            "expected true/false for {key}, got '{value}'"
        ))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|item| parse_num(key, item.trim()))
        .collect()
}

impl ExperimentConfig {
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!("line {}: expected 'section.key = value'", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.apply(key, value).map_err(|e| {
                HarnessError::Config(format!("line {}: {e}", lineno + 1))
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            HarnessError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse_str(&text)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "experiment.seed" => self.seed = parse_num(key, value)?,
            "experiment.out_dir" => self.out_dir = PathBuf::from(value),
            "dataset.kind" => self.dataset_kind = DatasetKind::parse(value)?,
            "dataset.n" => self.dataset_n = parse_num(key, value)?,
            "dataset.dim" => self.dataset_dim = parse_num(key, value)?,
            "dataset.noise" => self.dataset_noise = parse_num(key, value)?,
            "dataset.frequencies" => self.dataset_frequencies = parse_list(key, value)?,
            "dataset.path" => self.dataset_path = Some(PathBuf::from(value)),
            "dataset.test_fraction" => self.test_fraction = parse_num(key, value)?,
            "model.hidden" => self.hidden = parse_list(key, value)?,
            "model.activation" => {
                self.activation = Activation::parse(value)
                    .map_err(|e| HarnessError::Config(e.to_string()))?
            }
            "model.heads" => self.heads = parse_num(key, value)?,
            "model.scale_c" => self.scale_c = parse_num(key, value)?,
            "train.variant" => {
                self.variant =
                    Variant::parse(value).map_err(|e| HarnessError::Config(e.to_string()))?
            }
            "train.epochs" => self.epochs = parse_num(key, value)?,
            "train.batch_size" => self.batch_size = parse_num(key, value)?,
            "train.lr" => self.learning_rate = parse_num(key, value)?,
            "train.k_max" => self.k_max = parse_num(key, value)?,
            "train.ema_decay" => self.ema_decay = parse_num(key, value)?,
            "attack.epsilon" => self.epsilon = parse_num(key, value)?,
            "attack.alpha" => self.alpha = parse_num(key, value)?,
            "attack.steps" => self.steps = parse_num(key, value)?,
            "attack.input_min" => self.input_min = Some(parse_num(key, value)?),
            "attack.input_max" => self.input_max = Some(parse_num(key, value)?),
            "eval.attack" => self.eval_attack = EvalAttackKind::parse(value)?,
            "eval.steps" => self.eval_steps = parse_num(key, value)?,
            "eval.epsilon" => self.eval_epsilon = Some(parse_num(key, value)?),
            "eval.alpha" => self.eval_alpha = Some(parse_num(key, value)?),
            "eval.eot" => self.eval_eot = parse_num(key, value)?,
            "eval.mimic" => self.eval_mimic = parse_bool(key, value)?,
            "eval.cap" => self.eval_cap = parse_num(key, value)?,
            "eval.inference" => {
                self.eval_inference = Some(
                    InferenceMode::parse(value)
                        .map_err(|e| HarnessError::Config(e.to_string()))?,
                )
            }
            "analysis.cadence" => self.analysis_cadence = parse_num(key, value)?,
            "analysis.variance" => self.analysis_variance = parse_num(key, value)?,
            "analysis.cap" => self.analysis_cap = parse_num(key, value)?,
            "analysis.adversarial" => self.analysis_adversarial = parse_bool(key, value)?,
            "analysis.dump" => self.analysis_dump = parse_bool(key, value)?,
            _ => {
                return Err(HarnessError::Config(format!("unknown key '{key}'")));
            }
        }
        Ok(())
    }

    /// Field-level validation; everything the training core validates again
    /// is checked here first so a bad config never starts compute.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(HarnessError::Config(msg));
        if self.dataset_n < 2 {
            return fail(format!("dataset.n must be at least 2, got {}", self.dataset_n));
        }
        match self.dataset_kind {
            DatasetKind::SineMix => {
                if self.dataset_dim < 1 {
                    return fail("dataset.dim must be at least 1".into());
                }
                if self.dataset_frequencies.is_empty() {
                    return fail("dataset.frequencies must be non-empty".into());
                }
            }
            DatasetKind::Rings => {
                if self.dataset_dim != 2 {
                    return fail("rings datasets are 2-dimensional".into());
                }
            }
            DatasetKind::ImageBinary => {
                if self.dataset_path.is_none() {
                    return fail("image-binary datasets need dataset.path".into());
                }
            }
        }
        if self.dataset_noise < 0.0 {
            return fail("dataset.noise must be non-negative".into());
        }
        if !(0.0 < self.test_fraction && self.test_fraction < 1.0) {
            return fail(format!(
                "dataset.test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            ));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return fail("model.hidden must list positive widths".into());
        }
        if self.heads < 1 {
            return fail("model.heads must be at least 1".into());
        }
        if !(self.scale_c > 0.0) {
            return fail(format!("model.scale_c must be positive, got {}", self.scale_c));
        }
        if self.epochs < 1 {
            return fail("train.epochs must be at least 1".into());
        }
        if self.batch_size < 1 {
            return fail("train.batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0) {
            return fail(format!("train.lr must be positive, got {}", self.learning_rate));
        }
        if self.k_max < 1 {
            return fail("train.k_max must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return fail(format!(
                "train.ema_decay must lie in [0, 1), got {}",
                self.ema_decay
            ));
        }
        if self.epsilon < 0.0 {
            return fail(format!("attack.epsilon must be non-negative, got {}", self.epsilon));
        }
        if !(self.alpha > 0.0) {
            return fail(format!("attack.alpha must be positive, got {}", self.alpha));
        }
        if self.steps < 1 {
            return fail("attack.steps must be at least 1".into());
        }
        if self.variant == Variant::PhaseAt && self.steps != 1 {
            return fail("the phaseat variant uses attack.steps = 1 (use phaseat-iterative)".into());
        }
        if let (Some(lo), Some(hi)) = (self.input_min, self.input_max) {
            if !(lo < hi) {
                return fail(format!("attack input range [{lo}, {hi}] is empty"));
            }
        }
        if self.eval_attack != EvalAttackKind::None && self.eval_steps < 1 {
            return fail("eval.steps must be at least 1".into());
        }
        if self.eval_attack == EvalAttackKind::Fgsm && self.eval_steps != 1 {
            return fail("eval.attack = fgsm implies eval.steps = 1".into());
        }
        if self.eval_cap < 1 {
            return fail("eval.cap must be at least 1".into());
        }
        if !(self.analysis_variance > 0.0) {
            return fail(format!(
                "analysis.variance must be positive, got {}",
                self.analysis_variance
            ));
        }
        if self.analysis_cap < 2 {
            return fail("analysis.cap must be at least 2".into());
        }
        Ok(())
    }

    /// The valid input range for attacks: explicit keys win, otherwise the
    /// dataset's own domain.
    pub fn input_range(&self, dataset: &Dataset) -> (f64, f64) {
        (
            self.input_min.unwrap_or(dataset.input_min),
            self.input_max.unwrap_or(dataset.input_max),
        )
    }

    pub fn train_attack(&self, dataset: &Dataset) -> AttackConfig {
        let (input_min, input_max) = self.input_range(dataset);
        AttackConfig {
            epsilon: self.epsilon,
            alpha: self.alpha,
            steps: self.steps,
            eot_samples: 0,
            mimic_frequency: false,
            seed: self.seed,
            input_min,
            input_max,
        }
    }

    /// The evaluation attack, or None when disabled.
    pub fn eval_attack_config(&self, dataset: &Dataset) -> Option<AttackConfig> {
        if self.eval_attack == EvalAttackKind::None {
            return None;
        }
        let (input_min, input_max) = self.input_range(dataset);
        let epsilon = self.eval_epsilon.unwrap_or(self.epsilon);
        Some(AttackConfig {
            epsilon,
            alpha: self.eval_alpha.unwrap_or(epsilon / 4.0),
            steps: match self.eval_attack {
                EvalAttackKind::Fgsm => 1,
                _ => self.eval_steps,
            },
            eot_samples: self.eval_eot,
            mimic_frequency: self.eval_mimic,
            seed: self.seed,
            input_min,
            input_max,
        })
    }

    /// Human-readable evaluation attack name for the metrics rows.
    pub fn eval_attack_name(&self) -> String {
        let mut name = match self.eval_attack {
            EvalAttackKind::None => return "none".into(),
            EvalAttackKind::Fgsm => "fgsm".into(),
            EvalAttackKind::Pgd => format!("pgd{}", self.eval_steps),
        };
        if self.eval_eot > 0 {
            name.push_str(&format!("+eot{}", self.eval_eot));
        }
        if self.eval_mimic {
            name.push_str("+freq");
        }
        name
    }

    /// Defender inference mode: explicit key wins, otherwise sampled for the
    /// phase variants and zero-frequency for the baselines.
    pub fn inference_mode(&self) -> InferenceMode {
        self.eval_inference.unwrap_or(if self.variant.is_phase() {
            InferenceMode::Sampled
        } else {
            InferenceMode::Zero
        })
    }

    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            variance: self.analysis_variance,
            subsample_cap: self.analysis_cap,
            subsample_seed: self.seed,
        }
    }

    pub fn to_train_config(&self, dataset: &Dataset) -> TrainConfig {
        let spectral = (self.analysis_cadence > 0).then(|| SpectralPlan {
            filter: self.filter_config(),
            cadence: self.analysis_cadence,
            adversarial: self.analysis_adversarial,
        });
        TrainConfig {
            variant: self.variant,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            attack: self.train_attack(dataset),
            head_count: self.heads,
            k_max: self.k_max,
            ema_decay: self.ema_decay,
            scale_c: self.scale_c,
            hidden: self.hidden.clone(),
            activation: self.activation,
            pca_iters: 100,
            seed: self.seed,
            eval: EvalPlan {
                attack: self.eval_attack_config(dataset),
                inference: self.inference_mode(),
                eval_cap: self.eval_cap,
                spectral,
            },
        }
    }
}
