//! `phaseat` command-line interface.

use clap::{Parser, Subcommand, ValueEnum};
use phaseat_cli::config::ExperimentConfig;
use phaseat_cli::{experiment, metrics, model_io, report, HarnessError};
use phaseat_core::attack;
use phaseat_core::{seed, spectrum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "phaseat",
    about = "Phase-shifted adversarial training experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Fgsm,
    Pgd,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured dataset and dump it as CSV.
    GenData {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
        /// Override the experiment seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model per the config, writing metrics, checkpoints, and the
    /// final model container.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Attack a saved model and report per-sample results plus robust
    /// accuracy.
    Attack {
        #[arg(long)]
        config: PathBuf,
        /// Model container to attack.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        method: Option<Method>,
        /// Attack step count.
        #[arg(long)]
        steps: Option<usize>,
        /// Expectation-over-transformation sample count (0 disables).
        #[arg(long)]
        eot: Option<usize>,
        /// Draw attack frequencies from the defender's multinomial.
        #[arg(long)]
        mimic_frequency: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Frequency-error analysis of a saved model on the configured dataset.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Pivot metrics files into plot-ready CSV and SVG curves.
    Report {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// metrics.csv files (one per run); the parent directory name labels
        /// each run.
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(path: &PathBuf, seed: Option<u64>, out: Option<PathBuf>) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(out) = out {
        cfg.out_dir = out;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::GenData { config, out, seed } => {
            let cfg = load_config(&config, seed, None)?;
            let dataset = experiment::build_dataset(&cfg)?;
            experiment::dump_dataset_csv(&out, &dataset)?;
            println!(
                "wrote {} samples ({} classes, dim {}) to {}",
                dataset.len(),
                dataset.num_classes,
                dataset.input_dim,
                out.display()
            );
            Ok(())
        }
        Command::Train { config, out, seed } => {
            let cfg = load_config(&config, seed, out)?;
            let artifacts = experiment::run_experiment(&cfg)?;
            let last = artifacts.metrics.last().expect("at least one epoch");
            println!(
                "trained {} for {} epochs: clean {:.3}, robust {}, loss {:.4}",
                cfg.variant.name(),
                cfg.epochs,
                last.clean_acc,
                metrics::fmt_f64(last.robust_acc),
                last.train_loss
            );
            println!("artifacts in {}", artifacts.out_dir.display());
            Ok(())
        }
        Command::Attack {
            config,
            model,
            out,
            method,
            steps,
            eot,
            mimic_frequency,
            seed,
        } => {
            let cfg = load_config(&config, seed, out.clone())?;
            let (net, state) = model_io::load_model(&model)?;
            let dataset = experiment::build_dataset(&cfg)?;
            let (_, test_set) = experiment::split_dataset(&cfg, &dataset)?;
            let mut attack_cfg = cfg
                .eval_attack_config(&dataset)
                .unwrap_or_else(|| {
                    let mut c = attack::AttackConfig::pgd_eval_default(cfg.epsilon);
                    let (lo, hi) = cfg.input_range(&dataset);
                    c.input_min = lo;
                    c.input_max = hi;
                    c.seed = cfg.seed;
                    c
                });
            if let Some(method) = method {
                if matches!(method, Method::Fgsm) {
                    attack_cfg.steps = 1;
                    attack_cfg.alpha = cfg.alpha;
                }
            }
            if let Some(steps) = steps {
                attack_cfg.steps = steps;
            }
            if let Some(eot) = eot {
                attack_cfg.eot_samples = eot;
            }
            if mimic_frequency {
                attack_cfg.mimic_frequency = true;
            }
            let cap = cfg.eval_cap.min(test_set.len()).max(1);
            let eval = attack::evaluate_robust_accuracy(
                &net,
                &state,
                &test_set.inputs[..cap],
                &test_set.labels[..cap],
                &attack_cfg,
                cfg.inference_mode(),
                seed::derive(cfg.seed, "eval"),
            )?;
            let out_dir = cfg.out_dir.clone();
            std::fs::create_dir_all(&out_dir)?;
            let report_path = out_dir.join("attack_report.csv");
            metrics::write_attack_report(&report_path, &eval.records)?;
            println!(
                "attacked {} samples: clean {:.3}, robust {:.3} (eps {}, steps {}, eot {}, mimic {})",
                cap,
                eval.clean_accuracy,
                eval.robust_accuracy,
                attack_cfg.epsilon,
                attack_cfg.steps,
                attack_cfg.eot_samples,
                attack_cfg.mimic_frequency
            );
            println!("report at {}", report_path.display());
            Ok(())
        }
        Command::Analyze {
            config,
            model,
            out,
            seed,
        } => {
            let cfg = load_config(&config, seed, out)?;
            let (net, state) = model_io::load_model(&model)?;
            let _ = &state;
            let dataset = experiment::build_dataset(&cfg)?;
            let (train_set, _) = experiment::split_dataset(&cfg, &dataset)?;
            let labels = train_set.one_hot_labels();
            let report = spectrum::frequency_errors(
                |x| {
                    let logits = phaseat_core::phase::base_forward(&net, x)?;
                    Ok(phaseat_core::net::softmax(&logits)?.data().to_vec())
                },
                &train_set.inputs,
                &labels,
                &cfg.filter_config(),
                cfg.analysis_dump,
            )?;
            let out_dir = cfg.out_dir.clone();
            std::fs::create_dir_all(&out_dir)?;
            let summary = out_dir.join("spectrum.csv");
            std::fs::write(
                &summary,
                format!(
                    "e_low,e_high\n{},{}\n",
                    metrics::fmt_f64(report.e_low),
                    metrics::fmt_f64(report.e_high)
                ),
            )?;
            if let Some(points) = &report.per_point {
                use std::io::Write as _;
                let mut f = std::io::BufWriter::new(std::fs::File::create(
                    out_dir.join("spectrum_points.csv"),
                )?);
                writeln!(
                    f,
                    "index,label_low,label_high,output_low,output_high,err_low,err_high"
                )?;
                for p in points {
                    writeln!(
                        f,
                        "{},{},{},{},{},{},{}",
                        p.index,
                        metrics::fmt_f64(p.label_low_norm),
                        metrics::fmt_f64(p.label_high_norm),
                        metrics::fmt_f64(p.output_low_norm),
                        metrics::fmt_f64(p.output_high_norm),
                        metrics::fmt_f64(p.err_low),
                        metrics::fmt_f64(p.err_high)
                    )?;
                }
            }
            println!(
                "e_low {}, e_high {} ({} points)",
                metrics::fmt_f64(report.e_low),
                metrics::fmt_f64(report.e_high),
                train_set.len().min(cfg.analysis_cap)
            );
            println!("summary at {}", summary.display());
            Ok(())
        }
        Command::Report { out, metrics } => {
            let inputs = report::load_inputs(&metrics)?;
            let written = report::write_report(&inputs, &out)?;
            for path in written {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}
