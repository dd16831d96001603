//! Property tests for the module invariants.

use num_complex::Complex64;
use phaseat_core::attack::{self, AttackConfig, FixedFrequencyModel};
use phaseat_core::freq::{fourier_coefficient, FrequencyState};
use phaseat_core::net::{softmax, Activation};
use phaseat_core::phase::{compute_first_pc, PhaseModel, ProjectionSpec};
use phaseat_core::spectrum::{gaussian_low_pass, FilterConfig};
use phaseat_core::Tensor;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn finite_vec(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3..1e3f64, len)
}

fn small_model(seed: u64) -> PhaseModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let projection = ProjectionSpec::from_unnormalized(vec![0.5, -1.0], 1.0).unwrap();
    PhaseModel::seeded(2, &[5], Activation::Tanh, 2, 2, projection, &mut rng).unwrap()
}

proptest! {
    #[test]
    fn softmax_is_probability_vector(logits in finite_vec(1..12)) {
        let s = softmax(&Tensor::vector(logits).unwrap()).unwrap();
        let sum: f64 = s.data().iter().sum();
        prop_assert!(s.data().iter().all(|&p| p >= 0.0));
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fourier_coefficient_is_linear(
        o1 in prop::collection::vec(-10.0..10.0f64, 6),
        o2 in prop::collection::vec(-10.0..10.0f64, 6),
        zs in prop::collection::vec(-1.0..1.0f64, 3),
        a in -5.0..5.0f64,
        k in 0u32..16,
    ) {
        let rows = |v: &[f64]| -> Vec<Tensor> {
            v.chunks(2).map(|c| Tensor::vector(c.to_vec()).unwrap()).collect()
        };
        let combined: Vec<f64> = o1.iter().zip(o2.iter()).map(|(x, y)| a * x + y).collect();
        let f1 = fourier_coefficient(&rows(&o1), &zs, k).unwrap();
        let f2 = fourier_coefficient(&rows(&o2), &zs, k).unwrap();
        let fc = fourier_coefficient(&rows(&combined), &zs, k).unwrap();
        for c in 0..2 {
            let expect = a * f1[c] + f2[c];
            prop_assert!((fc[c] - expect).norm() < 1e-10);
        }
    }

    #[test]
    fn sampled_frequencies_stay_in_range(
        d in prop::collection::vec(0.0..10.0f64, 1..32),
        heads in 1usize..6,
        seed in 0u64..1000,
    ) {
        let k_max = d.len();
        let state = FrequencyState::from_parts(
            k_max,
            0.9,
            1,
            vec![vec![Complex64::new(0.0, 0.0)]; k_max],
            vec![vec![Complex64::new(0.0, 0.0)]; k_max],
            d,
            true,
        ).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let freqs = state.sample_frequencies(heads, &mut rng);
        prop_assert_eq!(freqs.omegas()[0], 0);
        prop_assert!(freqs.omegas().iter().all(|&w| (w as usize) < k_max));
    }

    #[test]
    fn attack_respects_ball_and_range(
        epsilon in 0.0..0.4f64,
        alpha in 0.001..0.3f64,
        steps in 1usize..5,
        x0 in -1.0..1.0f64,
        x1 in -1.0..1.0f64,
        seed in 0u64..500,
    ) {
        let model = small_model(17);
        let cfg = AttackConfig {
            epsilon,
            alpha,
            steps,
            eot_samples: 0,
            mimic_frequency: false,
            seed,
            input_min: -1.0,
            input_max: 1.0,
        };
        let x = Tensor::vector(vec![x0, x1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut target = FixedFrequencyModel::zero(&model);
        let p = attack::pgd(&mut target, &x, 0, &cfg, &mut rng).unwrap();
        for delta in [&p.final_delta, &p.best_delta] {
            prop_assert!(delta.linf_norm() <= epsilon + 1e-12);
            for (xi, di) in x.data().iter().zip(delta.data()) {
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&(xi + di)));
            }
        }
    }

    #[test]
    fn single_step_attack_equals_one_step_pgd(
        epsilon in 0.001..0.3f64,
        alpha in 0.001..0.3f64,
        seed in 0u64..500,
    ) {
        let model = small_model(18);
        let cfg = AttackConfig {
            epsilon,
            alpha,
            steps: 1,
            eot_samples: 0,
            mimic_frequency: false,
            seed,
            input_min: -1.0,
            input_max: 1.0,
        };
        let x = Tensor::vector(vec![0.25, -0.6]).unwrap();
        let mut ra = ChaCha8Rng::seed_from_u64(seed);
        let mut rb = ChaCha8Rng::seed_from_u64(seed);
        let mut ta = FixedFrequencyModel::zero(&model);
        let mut tb = FixedFrequencyModel::zero(&model);
        let a = attack::fgsm(&mut ta, &x, 1, &cfg, &mut ra).unwrap();
        let b = attack::pgd(&mut tb, &x, 1, &cfg, &mut rb).unwrap();
        prop_assert_eq!(a.final_delta.data(), b.final_delta.data());
        prop_assert_eq!(a.best_loss.to_bits(), b.best_loss.to_bits());
    }

    #[test]
    fn low_plus_high_reconstructs_values(
        xs in prop::collection::vec(-2.0..2.0f64, 2..20),
        variance in 0.01..5.0f64,
    ) {
        let points: Vec<Tensor> = xs.iter().map(|&x| Tensor::vector(vec![x]).unwrap()).collect();
        let values: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x * x, -x]).collect();
        let cfg = FilterConfig { variance, ..FilterConfig::default() };
        let low = gaussian_low_pass(&points, &values, &cfg).unwrap();
        for (v, l) in values.iter().zip(low.iter()) {
            for c in 0..2 {
                let high = v[c] - l[c];
                prop_assert!((l[c] + high - v[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn principal_component_is_unit_norm(
        seed in 0u64..300,
        n in 3usize..40,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let data: Vec<Tensor> = (0..n)
            .map(|_| {
                Tensor::vector(vec![
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-1.0..1.0),
                ])
                .unwrap()
            })
            .collect();
        let spec = compute_first_pc(&data, 60, seed).unwrap();
        let norm: f64 = spec.direction().iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-9);
    }
}
