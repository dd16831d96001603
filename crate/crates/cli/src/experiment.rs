//! End-to-end experiment orchestration: dataset construction, training with
//! per-epoch metric/checkpoint emission, final persistence, and the summary
//! file.

use crate::config::ExperimentConfig;
use crate::metrics::{self, DiscrepancyWriter, MetricsRow, MetricsWriter};
use crate::model_io;
use crate::{HarnessError, Result};
use phaseat_core::attack::{self, InferenceMode};
use phaseat_core::data::{self, Dataset};
use phaseat_core::freq::FrequencyState;
use phaseat_core::phase::PhaseModel;
use phaseat_core::seed;
use phaseat_core::train::{self, EpochMetrics, EpochSink};
use std::path::{Path, PathBuf};

/// Build the configured dataset. File-backed datasets are read (and
/// validated) here, before any artifact is written.
pub fn build_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    use crate::config::DatasetKind;
    let mut rng = seed::stream(cfg.seed, "data-gen");
    let dataset = match cfg.dataset_kind {
        DatasetKind::SineMix => data::gen_sine_mix(
            cfg.dataset_n,
            cfg.dataset_dim,
            &cfg.dataset_frequencies,
            cfg.dataset_noise,
            &mut rng,
        )?,
        DatasetKind::Rings => data::gen_rings(cfg.dataset_n, cfg.dataset_noise, &mut rng)?,
        DatasetKind::ImageBinary => {
            let path = cfg.dataset_path.as_ref().expect("validated");
            let bytes = std::fs::read(path).map_err(|e| {
                HarnessError::Config(format!("cannot read dataset {}: {e}", path.display()))
            })?;
            data::parse_image_binary(&bytes, cfg.dataset_n)?
        }
    };
    Ok(dataset)
}

pub fn split_dataset(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<(Dataset, Dataset)> {
    let mut rng = seed::stream(cfg.seed, "data-split");
    Ok(data::split(dataset, cfg.test_fraction, &mut rng)?)
}

#[derive(Debug)]
pub struct ExperimentArtifacts {
    pub out_dir: PathBuf,
    pub metrics_path: PathBuf,
    pub model_path: PathBuf,
    pub summary_path: PathBuf,
    pub metrics: Vec<EpochMetrics>,
}

struct HarnessSink<'a> {
    cfg: &'a ExperimentConfig,
    train_inputs: &'a [phaseat_core::Tensor],
    train_labels: &'a [usize],
    attack_name: String,
    inference: InferenceMode,
    writer: MetricsWriter,
    discrepancy: Option<DiscrepancyWriter>,
    checkpoints_dir: PathBuf,
    error: Option<HarnessError>,
}

impl HarnessSink<'_> {
    fn emit(&mut self, m: &EpochMetrics, model: &PhaseModel, state: &FrequencyState) -> Result<()> {
        // Train-split clean accuracy is measured here (the trainer's own
        // clean/robust numbers are test-split).
        let cap = self.cfg.eval_cap.min(self.train_inputs.len()).max(1);
        let eval_seed = seed::derive_indexed(self.cfg.seed, "train-split-eval", m.epoch as u64);
        let mut hits = 0usize;
        for i in 0..cap {
            let mut rng = seed::stream_indexed(eval_seed, "eval", i as u64);
            let pred = attack::infer(model, state, &self.train_inputs[i], self.inference, &mut rng)?;
            hits += usize::from(pred == self.train_labels[i]);
        }
        let train_clean = hits as f64 / cap as f64;

        self.writer.append(&MetricsRow {
            epoch: m.epoch,
            split: "train".into(),
            clean_acc: train_clean,
            robust_acc: f64::NAN,
            attack_name: self.attack_name.clone(),
            e_low: m.e_low,
            e_high: m.e_high,
            loss: m.train_loss,
        })?;
        self.writer.append(&MetricsRow {
            epoch: m.epoch,
            split: "test".into(),
            clean_acc: m.clean_acc,
            robust_acc: m.robust_acc,
            attack_name: self.attack_name.clone(),
            e_low: f64::NAN,
            e_high: f64::NAN,
            loss: f64::NAN,
        })?;
        if let Some(w) = self.discrepancy.as_mut() {
            w.append(m.epoch, state.discrepancy())?;
        }
        let checkpoint = self.checkpoints_dir.join(format!("epoch_{:04}.phat", m.epoch));
        model_io::save_model(&checkpoint, model, state)?;
        Ok(())
    }
}

impl EpochSink for HarnessSink<'_> {
    fn on_epoch(&mut self, metrics: &EpochMetrics, model: &PhaseModel, state: &FrequencyState) {
        if self.error.is_none() {
            if let Err(e) = self.emit(metrics, model, state) {
                self.error = Some(e);
            }
        }
    }
}

/// Run a full experiment: train per the config, emit metrics.csv (two rows
/// per epoch, one per split), per-epoch checkpoints, the discrepancy trace,
/// the final model container, and a key-value summary file.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentArtifacts> {
    cfg.validate()?;
    // Dataset problems (missing file, malformed records) must surface before
    // any artifact is created.
    let dataset = build_dataset(cfg)?;
    let (train_set, test_set) = split_dataset(cfg, &dataset)?;
    let train_cfg = cfg.to_train_config(&dataset);

    let out_dir = cfg.out_dir.clone();
    std::fs::create_dir_all(&out_dir)?;
    let checkpoints_dir = out_dir.join("checkpoints");
    std::fs::create_dir_all(&checkpoints_dir)?;
    let metrics_path = out_dir.join("metrics.csv");

    let mut sink = HarnessSink {
        cfg,
        train_inputs: &train_set.inputs,
        train_labels: &train_set.labels,
        attack_name: cfg.eval_attack_name(),
        inference: cfg.inference_mode(),
        writer: MetricsWriter::create(&metrics_path)?,
        discrepancy: if cfg.variant.is_phase() {
            Some(DiscrepancyWriter::create(
                &out_dir.join("discrepancy.csv"),
                cfg.k_max,
            )?)
        } else {
            None
        },
        checkpoints_dir,
        error: None,
    };

    let output = train::train_with_sink(&train_cfg, &train_set, &test_set, &mut sink)?;
    if let Some(e) = sink.error.take() {
        return Err(e);
    }
    sink.writer.finish()?;
    if let Some(w) = sink.discrepancy.take() {
        w.finish()?;
    }

    let model_path = out_dir.join("model.phat");
    model_io::save_model(&model_path, &output.model, &output.state)?;

    let summary_path = out_dir.join("summary.txt");
    write_summary(&summary_path, cfg, &output.metrics)?;

    Ok(ExperimentArtifacts {
        out_dir,
        metrics_path,
        model_path,
        summary_path,
        metrics: output.metrics,
    })
}

fn write_summary(path: &Path, cfg: &ExperimentConfig, metrics: &[EpochMetrics]) -> Result<()> {
    use std::fmt::Write as _;
    let last = metrics.last().expect("at least one epoch");
    let mut text = String::new();
    let _ = writeln!(text, "variant = {}", cfg.variant.name());
    let _ = writeln!(text, "dataset = {}", cfg.dataset_kind.name());
    let _ = writeln!(text, "seed = {}", cfg.seed);
    let _ = writeln!(text, "epochs = {}", cfg.epochs);
    let _ = writeln!(text, "eval_attack = {}", cfg.eval_attack_name());
    let _ = writeln!(text, "final_train_loss = {}", metrics::fmt_f64(last.train_loss));
    let _ = writeln!(text, "final_clean_acc = {}", metrics::fmt_f64(last.clean_acc));
    let _ = writeln!(text, "final_robust_acc = {}", metrics::fmt_f64(last.robust_acc));
    let _ = writeln!(text, "final_e_low = {}", metrics::fmt_f64(last.e_low));
    let _ = writeln!(text, "final_e_high = {}", metrics::fmt_f64(last.e_high));
    std::fs::write(path, text)?;
    Ok(())
}

/// Write the generated dataset as CSV (inputs, label, optional raw target).
pub fn dump_dataset_csv(path: &Path, dataset: &Dataset) -> Result<()> {
    use std::io::Write as _;
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header: Vec<String> = (0..dataset.input_dim).map(|i| format!("x{i}")).collect();
    header.push("label".into());
    if dataset.targets.is_some() {
        header.push("target".into());
    }
    writeln!(file, "{}", header.join(","))?;
    for i in 0..dataset.len() {
        let mut row: Vec<String> = dataset.inputs[i]
            .data()
            .iter()
            .map(|v| metrics::fmt_f64(*v))
            .collect();
        row.push(dataset.labels[i].to_string());
        if let Some(targets) = &dataset.targets {
            row.push(metrics::fmt_f64(targets[i]));
        }
        writeln!(file, "{}", row.join(","))?;
    }
    file.flush()?;
    Ok(())
}
