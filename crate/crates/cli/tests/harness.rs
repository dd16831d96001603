//! Harness integration: persistence round trips, experiment orchestration,
//! determinism, and the CLI binary end to end.

use phaseat_cli::config::ExperimentConfig;
use phaseat_cli::{experiment, metrics, model_io, HarnessError};
use phaseat_core::attack::{self, AttackConfig, InferenceMode};
use phaseat_core::net::Activation;
use phaseat_core::phase::{self, PhaseModel, ProjectionSpec};
use phaseat_core::freq::FrequencyState;
use phaseat_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::process::Command;

fn small_model(seed: u64) -> (PhaseModel, FrequencyState) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let projection = ProjectionSpec::from_unnormalized(vec![1.0, -0.4], 1.0).unwrap();
    let model =
        PhaseModel::seeded(2, &[8, 6], Activation::Tanh, 2, 3, projection, &mut rng).unwrap();
    let mut state = FrequencyState::new(12, 0.9, 2).unwrap();
    let batch: Vec<Tensor> = (0..6)
        .map(|i| Tensor::vector(vec![0.1 * i as f64 - 0.3, 0.05 * i as f64]).unwrap())
        .collect();
    let adv: Vec<Tensor> = batch
        .iter()
        .map(|x| {
            Tensor::vector(x.data().iter().map(|v| v + 0.01).collect()).unwrap()
        })
        .collect();
    state
        .update_discrepancy(
            &batch,
            &adv,
            &model,
            &phase::FrequencyAssignment::zeros(3),
        )
        .unwrap();
    (model, state)
}

#[test]
fn model_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.phat");
    let (model, state) = small_model(3);
    model_io::save_model(&path, &model, &state).unwrap();
    let (loaded, loaded_state) = model_io::load_model(&path).unwrap();

    assert_eq!(loaded.checksum(), model.checksum());
    let x = Tensor::vector(vec![0.37, -0.81]).unwrap();
    let freqs = phase::FrequencyAssignment::new(vec![0, 5, 2]).unwrap();
    let a = phase::phase_forward(&model, &freqs, &x).unwrap();
    let b = phase::phase_forward(&loaded, &freqs, &x).unwrap();
    for (u, v) in a.data().iter().zip(b.data()) {
        assert_eq!(u.to_bits(), v.to_bits());
    }
    assert_eq!(loaded_state, state);
}

#[test]
fn truncated_and_corrupt_containers_are_format_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.phat");
    let (model, state) = small_model(4);
    model_io::save_model(&path, &model, &state).unwrap();

    let bytes = std::fs::read(&path).unwrap();
    let truncated = dir.path().join("trunc.phat");
    std::fs::write(&truncated, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(
        model_io::load_model(&truncated),
        Err(HarnessError::Format(_))
    ));

    let bad_magic = dir.path().join("magic.phat");
    let mut corrupted = bytes.clone();
    corrupted[0] = b'X';
    std::fs::write(&bad_magic, &corrupted).unwrap();
    assert!(matches!(
        model_io::load_model(&bad_magic),
        Err(HarnessError::Format(_))
    ));

    let bad_version = dir.path().join("version.phat");
    let mut corrupted = bytes.clone();
    corrupted[4] = 99;
    std::fs::write(&bad_version, &corrupted).unwrap();
    assert!(matches!(
        model_io::load_model(&bad_version),
        Err(HarnessError::Format(_))
    ));

    let trailing = dir.path().join("trailing.phat");
    let mut extended = bytes;
    extended.push(0);
    std::fs::write(&trailing, &extended).unwrap();
    assert!(matches!(
        model_io::load_model(&trailing),
        Err(HarnessError::Format(_))
    ));
}

#[test]
fn saved_and_loaded_models_evaluate_identically() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.phat");
    let (model, state) = small_model(5);
    model_io::save_model(&path, &model, &state).unwrap();
    let (loaded, loaded_state) = model_io::load_model(&path).unwrap();

    let inputs: Vec<Tensor> = (0..24)
        .map(|i| Tensor::vector(vec![(i as f64) / 24.0 - 0.5, 0.2]).unwrap())
        .collect();
    let labels: Vec<usize> = (0..24).map(|i| i % 2).collect();
    let cfg = AttackConfig {
        epsilon: 0.05,
        alpha: 0.02,
        steps: 5,
        eot_samples: 2,
        mimic_frequency: true,
        seed: 11,
        input_min: -1.0,
        input_max: 1.0,
    };
    let a = attack::evaluate_robust_accuracy(
        &model,
        &state,
        &inputs,
        &labels,
        &cfg,
        InferenceMode::Sampled,
        77,
    )
    .unwrap();
    let b = attack::evaluate_robust_accuracy(
        &loaded,
        &loaded_state,
        &inputs,
        &labels,
        &cfg,
        InferenceMode::Sampled,
        77,
    )
    .unwrap();
    assert_eq!(a.robust_accuracy, b.robust_accuracy);
    for (ra, rb) in a.records.iter().zip(b.records.iter()) {
        assert_eq!(ra.final_loss.to_bits(), rb.final_loss.to_bits());
        assert_eq!(ra.adv_correct, rb.adv_correct);
    }
}

fn smoke_config(out_dir: &Path) -> String {
    format!(
        "\
experiment.seed = 11
experiment.out_dir = {}
dataset.kind = sine-mix
dataset.n = 200
dataset.dim = 1
dataset.frequencies = 1, 3
dataset.test_fraction = 0.2
model.hidden = 16, 16
model.heads = 1
train.variant = clean
train.epochs = 3
train.batch_size = 32
train.lr = 0.1
train.k_max = 8
attack.epsilon = 0.02
attack.alpha = 0.025
eval.attack = none
eval.cap = 64
analysis.cadence = 1
analysis.variance = 0.05
",
        out_dir.display()
    )
}

#[test]
fn clean_smoke_experiment_is_fast_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = ExperimentConfig::parse_str(&smoke_config(&out)).unwrap();
    let started = std::time::Instant::now();
    let artifacts = experiment::run_experiment(&cfg).unwrap();
    assert!(
        started.elapsed() < std::time::Duration::from_secs(10),
        "smoke run took {:?}",
        started.elapsed()
    );
    let rows = metrics::read_metrics(&artifacts.metrics_path).unwrap();
    let train_rows = rows.iter().filter(|r| r.split == "train").count();
    let test_rows = rows.iter().filter(|r| r.split == "test").count();
    assert_eq!(train_rows, 3);
    assert_eq!(test_rows, 3);
    assert!(artifacts.model_path.exists());
    assert!(artifacts.summary_path.exists());
    assert!(out.join("checkpoints/epoch_0002.phat").exists());
    // spectral columns present on train rows
    assert!(rows
        .iter()
        .filter(|r| r.split == "train")
        .all(|r| !r.e_low.is_nan() && !r.e_high.is_nan()));
}

#[test]
fn rerun_with_same_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let cfg_a = ExperimentConfig::parse_str(&smoke_config(&out_a)).unwrap();
    let cfg_b = ExperimentConfig::parse_str(&smoke_config(&out_b)).unwrap();
    let a = experiment::run_experiment(&cfg_a).unwrap();
    let b = experiment::run_experiment(&cfg_b).unwrap();
    let bytes_a = std::fs::read(&a.metrics_path).unwrap();
    let bytes_b = std::fs::read(&b.metrics_path).unwrap();
    assert_eq!(bytes_a, bytes_b);
    let model_a = std::fs::read(&a.model_path).unwrap();
    let model_b = std::fs::read(&b.model_path).unwrap();
    assert_eq!(model_a, model_b);
}

#[test]
fn missing_dataset_file_fails_before_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let text = format!(
        "\
experiment.out_dir = {}
dataset.kind = image-binary
dataset.path = {}
train.variant = clean
train.epochs = 1
",
        out.display(),
        dir.path().join("no-such-file.bin").display()
    );
    let cfg = ExperimentConfig::parse_str(&text).unwrap();
    let err = experiment::run_experiment(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(!out.exists(), "no partial artifacts on config failure");
}

#[test]
fn dataset_dump_has_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::parse_str(
        "dataset.kind = rings\ndataset.n = 40\ndataset.dim = 2\ntrain.variant = clean\n",
    )
    .unwrap();
    let dataset = experiment::build_dataset(&cfg).unwrap();
    let path = dir.path().join("data.csv");
    experiment::dump_dataset_csv(&path, &dataset).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x0,x1,label");
    assert_eq!(lines.count(), 40);
}

#[test]
fn cli_end_to_end_train_attack_analyze_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let config_path = dir.path().join("exp.conf");
    let mut text = smoke_config(&out);
    text = text.replace("train.variant = clean", "train.variant = phaseat");
    text = text.replace("model.heads = 1", "model.heads = 2");
    text = text.replace("eval.attack = none", "eval.attack = pgd\neval.steps = 3");
    std::fs::write(&config_path, &text).unwrap();
    let bin = env!("CARGO_BIN_EXE_phaseat");

    let run = |args: &[&str]| {
        let output = Command::new(bin).args(args).output().unwrap();
        assert!(
            output.status.success(),
            "command {:?} failed:\nstdout: {}\nstderr: {}",
            args,
            String::from_utf8_lossy(&output.stdout),
            String::from_utf8_lossy(&output.stderr)
        );
        String::from_utf8_lossy(&output.stdout).into_owned()
    };

    let cfg = config_path.to_str().unwrap();
    run(&["train", "--config", cfg]);
    assert!(out.join("metrics.csv").exists());
    assert!(out.join("model.phat").exists());
    assert!(out.join("discrepancy.csv").exists());

    let model = out.join("model.phat");
    let attack_out = run(&[
        "attack",
        "--config",
        cfg,
        "--model",
        model.to_str().unwrap(),
        "--steps",
        "2",
        "--eot",
        "2",
        "--mimic-frequency",
    ]);
    assert!(attack_out.contains("robust"));
    assert!(out.join("attack_report.csv").exists());

    run(&[
        "analyze",
        "--config",
        cfg,
        "--model",
        model.to_str().unwrap(),
    ]);
    assert!(out.join("spectrum.csv").exists());

    let report_dir = dir.path().join("report");
    run(&[
        "report",
        "--out",
        report_dir.to_str().unwrap(),
        out.join("metrics.csv").to_str().unwrap(),
    ]);
    assert!(report_dir.join("curves_accuracy.csv").exists());
    assert!(report_dir.join("curves_spectrum.csv").exists());
    assert!(report_dir.join("spectrum.svg").exists());

    let invalid = Command::new(bin)
        .args(["train", "--config", dir.path().join("nope.conf").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(invalid.status.code(), Some(2));
}
