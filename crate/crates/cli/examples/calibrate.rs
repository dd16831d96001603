// Scratch calibration runner (not part of the deliverable test surface).
use phaseat_core::attack::{AttackConfig, InferenceMode};
use phaseat_core::data;
use phaseat_core::net::Activation;
use phaseat_core::seed;
use phaseat_core::spectrum::FilterConfig;
use phaseat_core::train::{self, EvalPlan, SpectralPlan, TrainConfig, Variant};

fn desk1d_cfg(variant: Variant, seed: u64, epochs: usize, lr: f64, fvar: f64) -> TrainConfig {
    TrainConfig {
        variant,
        epochs,
        batch_size: 32,
        learning_rate: lr,
        attack: AttackConfig {
            epsilon: 0.031,
            alpha: 0.039,
            steps: 1,
            eot_samples: 0,
            mimic_frequency: false,
            seed,
            input_min: -1.0,
            input_max: 1.0,
        },
        head_count: 1,
        k_max: 16,
        ema_decay: 0.9,
        scale_c: 1.0,
        hidden: vec![64, 64],
        activation: Activation::Tanh,
        pca_iters: 100,
        seed,
        eval: EvalPlan {
            attack: None,
            inference: InferenceMode::Zero,
            eval_cap: 200,
            spectral: Some(SpectralPlan {
                filter: FilterConfig {
                    variance: fvar,
                    subsample_cap: 2048,
                    subsample_seed: seed,
                },
                cadence: 1,
                adversarial: false,
            }),
        },
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(|s| s.as_str()).unwrap_or("fp");
    match mode {
        "fp" => {
            // Criterion 4 exploration: clean + standard-at on sine-mix d=1.
            let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(60);
            let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.1);
            let fvar: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.02);
            for variant in [Variant::Clean, Variant::StandardAt] {
                for s in 0..5u64 {
                    let mut rng = seed::stream(1000 + s, "data-gen");
                    let ds = data::gen_sine_mix(1000, 1, &[1.0, 3.0, 5.0], 0.0, &mut rng).unwrap();
                    let mut srng = seed::stream(1000 + s, "data-split");
                    let (train_set, test_set) = data::split(&ds, 0.2, &mut srng).unwrap();
                    let cfg = desk1d_cfg(variant, 2000 + s, epochs, lr, fvar);
                    let t0 = std::time::Instant::now();
                    let out = train::train(&cfg, &train_set, &test_set).unwrap();
                    let lows: Vec<f64> = out.metrics.iter().map(|m| m.e_low).collect();
                    let highs: Vec<f64> = out.metrics.iter().map(|m| m.e_high).collect();
                    let first = |v: &[f64], tau: f64| {
                        v.iter().position(|&e| e < tau).map(|i| i as i64).unwrap_or(-1)
                    };
                    println!(
                        "{:12} seed {} ({:>5.1?}): acc {:.3} e_low {:.3}->{:.3} e_high {:.3}->{:.3} | low<0.6 @{} high<0.6 @{} | low<0.4 @{} high<0.4 @{}",
                        variant.name(), s, t0.elapsed(),
                        out.metrics.last().unwrap().clean_acc,
                        lows[0], lows[lows.len()-1], highs[0], highs[highs.len()-1],
                        first(&lows, 0.6), first(&highs, 0.6),
                        first(&lows, 0.4), first(&highs, 0.4),
                    );
                }
            }
        }
        "desk" => {
            // Criterion 5/7 exploration: phaseat vs standard-at on sine-mix d=2.
            let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(40);
            let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.1);
            let fvar: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.05);
            let kmax: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(16);
            let dim: usize = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(2);
            let freqs: Vec<f64> = args
                .get(7)
                .map(|s| s.split(',').map(|x| x.parse().unwrap()).collect())
                .unwrap_or_else(|| vec![1.0, 3.0]);
            for s in 0..5u64 {
                let mut rng = seed::stream(3000 + s, "data-gen");
                let ds = data::gen_sine_mix(1200, dim, &freqs, 0.0, &mut rng).unwrap();
                let mut srng = seed::stream(3000 + s, "data-split");
                let (train_set, test_set) = data::split(&ds, 0.2, &mut srng).unwrap();
                let mut results = Vec::new();
                for variant in [Variant::PhaseAt, Variant::StandardAt] {
                    let mut cfg = desk1d_cfg(variant, 4000 + s, epochs, lr, fvar);
                    cfg.k_max = kmax;
                    cfg.head_count = if variant == Variant::PhaseAt { 3 } else { 1 };
                    cfg.eval.inference = if variant == Variant::PhaseAt {
                        InferenceMode::Sampled
                    } else {
                        InferenceMode::Zero
                    };
                    cfg.eval.attack = Some(AttackConfig {
                        epsilon: 0.031,
                        alpha: 0.031 / 4.0,
                        steps: 10,
                        eot_samples: 0,
                        mimic_frequency: false,
                        seed: 5000 + s,
                        input_min: -1.0,
                        input_max: 1.0,
                    });
                    let t0 = std::time::Instant::now();
                    let out = train::train(&cfg, &train_set, &test_set).unwrap();
                    let half = &out.metrics[epochs / 2 - 1];
                    let last = out.metrics.last().unwrap();
                    println!(
                        "  {:12} seed {} ({:>6.1?}): clean {:.3} robust@T/2 {:.3} robust@T {:.3} e_low {:.3} e_high {:.3}",
                        variant.name(), s, t0.elapsed(),
                        last.clean_acc, half.robust_acc, last.robust_acc, last.e_low, last.e_high,
                    );
                    results.push((half.robust_acc, last.robust_acc, last.e_low, last.e_high));
                }
                println!(
                    "  => seed {s}: e_high phase<=std: {} | d(e_low) {:.3} | robust@T/2 phase>std: {}",
                    results[0].3 <= results[1].3,
                    (results[0].2 - results[1].2).abs(),
                    results[0].0 > results[1].0,
                );
            }
        }
        _ => eprintln!("unknown mode"),
    }
}
