// quick probe
use phaseat_core::attack::{AttackConfig, InferenceMode};
use phaseat_core::data;
use phaseat_core::net::Activation;
use phaseat_core::seed;
use phaseat_core::train::{self, EvalPlan, TrainConfig, Variant};

fn main() {
    let mut rng = seed::stream(1000, "data-gen");
    let ds = data::gen_sine_mix(1000, 1, &[1.0, 3.0, 5.0], 0.0, &mut rng).unwrap();
    let mut srng = seed::stream(1000, "data-split");
    let (train_set, test_set) = data::split(&ds, 0.2, &mut srng).unwrap();
    for lr in [0.03, 0.1, 0.3, 1.0] {
        let cfg = TrainConfig {
            variant: Variant::Clean,
            epochs: 40,
            batch_size: 64,
            learning_rate: lr,
            attack: AttackConfig {
                epsilon: 0.0, alpha: 0.039, steps: 1, eot_samples: 0,
                mimic_frequency: false, seed: 1, input_min: -1.0, input_max: 1.0,
            },
            head_count: 1, k_max: 16, ema_decay: 0.9, scale_c: 1.0,
            hidden: vec![32, 32], activation: Activation::Tanh, pca_iters: 100,
            seed: 2,
            eval: EvalPlan { attack: None, inference: InferenceMode::Zero, eval_cap: 200, spectral: None },
        };
        let out = train::train(&cfg, &train_set, &test_set).unwrap();
        let losses: Vec<String> = out.metrics.iter().step_by(5).map(|m| format!("{:.4}", m.train_loss)).collect();
        println!("lr {:4}: loss {} acc {:.3}", lr, losses.join(" "), out.metrics.last().unwrap().clean_acc);
    }
}
