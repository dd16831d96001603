//! Frequency discrepancy tracking and head-frequency sampling.
//!
//! For every integer frequency k below `k_max`, the coefficient of a batch is
//!
//! ```text
//! F_k = Σ_j T(X_j) · e^{−2πik z_j}
//! ```
//!
//! with z_j the scalar projection of the j-th input (one complex value per
//! output class). Clean and adversarial coefficients are tracked as
//! exponential moving averages, and the per-frequency discrepancy is the
//! complex modulus of their difference summed over classes. The discrepancy
//! vector induces the multinomial from which head frequencies are sampled;
//! slot 0 always holds the zero frequency.

use crate::error::{Error, Result};
use crate::phase::{self, FrequencyAssignment, PhaseModel};
use crate::tensor::Tensor;
use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::TAU;

/// EMA'd clean/adversarial Fourier coefficients and the discrepancy they
/// induce.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyState {
    k_max: usize,
    decay: f64,
    classes: usize,
    ema_clean: Vec<Vec<Complex64>>,
    ema_adv: Vec<Vec<Complex64>>,
    discrepancy: Vec<f64>,
    initialized: bool,
}

impl FrequencyState {
    pub fn new(k_max: usize, decay: f64, classes: usize) -> Result<Self> {
        if k_max == 0 {
            return Err(Error::Config("k_max must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&decay) {
            return Err(Error::Config(format!(
                "EMA decay must lie in [0, 1), got {decay}"
            )));
        }
        if classes == 0 {
            return Err(Error::Config("class count must be at least 1".into()));
        }
        Ok(Self {
            k_max,
            decay,
            classes,
            ema_clean: vec![vec![Complex64::new(0.0, 0.0); classes]; k_max],
            ema_adv: vec![vec![Complex64::new(0.0, 0.0); classes]; k_max],
            discrepancy: vec![0.0; k_max],
            initialized: false,
        })
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn discrepancy(&self) -> &[f64] {
        &self.discrepancy
    }

    pub fn initialized(&self) -> bool {
        self.initialized
    }

    pub fn ema_clean(&self) -> &[Vec<Complex64>] {
        &self.ema_clean
    }

    pub fn ema_adv(&self) -> &[Vec<Complex64>] {
        &self.ema_adv
    }

    /// Reassemble a state from persisted values.
    pub fn from_parts(
        k_max: usize,
        decay: f64,
        classes: usize,
        ema_clean: Vec<Vec<Complex64>>,
        ema_adv: Vec<Vec<Complex64>>,
        discrepancy: Vec<f64>,
        initialized: bool,
    ) -> Result<Self> {
        let mut state = Self::new(k_max, decay, classes)?;
        if ema_clean.len() != k_max
            || ema_adv.len() != k_max
            || discrepancy.len() != k_max
            || ema_clean.iter().any(|v| v.len() != classes)
            || ema_adv.iter().any(|v| v.len() != classes)
        {
            return Err(Error::Shape("frequency state parts have wrong lengths".into()));
        }
        if discrepancy.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::NonFinite("discrepancy must be non-negative".into()));
        }
        state.ema_clean = ema_clean;
        state.ema_adv = ema_adv;
        state.discrepancy = discrepancy;
        state.initialized = initialized;
        Ok(state)
    }

    /// Compute batch coefficients for every k on the clean and adversarial
    /// batches, fold them into the EMAs, and refresh the discrepancy vector.
    ///
    /// The first update seeds the EMAs with the batch coefficients (an EMA of
    /// an empty history is undefined); later updates apply
    /// `ema = decay·ema + (1 − decay)·current`.
    pub fn update_discrepancy(
        &mut self,
        clean_batch: &[Tensor],
        adv_batch: &[Tensor],
        model: &PhaseModel,
        freqs: &FrequencyAssignment,
    ) -> Result<()> {
        if clean_batch.len() != adv_batch.len() {
            return Err(Error::State(format!(
                "clean and adversarial batches are misaligned ({} vs {})",
                clean_batch.len(),
                adv_batch.len()
            )));
        }
        if clean_batch.is_empty() {
            return Err(Error::Shape("empty batch".into()));
        }
        let eval = |batch: &[Tensor]| -> Result<(Vec<Tensor>, Vec<f64>)> {
            let mut outputs = Vec::with_capacity(batch.len());
            let mut zs = Vec::with_capacity(batch.len());
            for x in batch {
                outputs.push(phase::phase_forward(model, freqs, x)?);
                zs.push(phase::project(x, model.projection())?);
            }
            Ok((outputs, zs))
        };
        let (clean_out, clean_z) = eval(clean_batch)?;
        let (adv_out, adv_z) = eval(adv_batch)?;
        if clean_out[0].len() != self.classes {
            return Err(Error::Shape(format!(
                "model emits {} classes, state tracks {}",
                clean_out[0].len(),
                self.classes
            )));
        }
        for k in 0..self.k_max {
            let fk_clean = fourier_coefficient(&clean_out, &clean_z, k as u32)?;
            let fk_adv = fourier_coefficient(&adv_out, &adv_z, k as u32)?;
            if self.initialized {
                for c in 0..self.classes {
                    self.ema_clean[k][c] =
                        self.decay * self.ema_clean[k][c] + (1.0 - self.decay) * fk_clean[c];
                    self.ema_adv[k][c] =
                        self.decay * self.ema_adv[k][c] + (1.0 - self.decay) * fk_adv[c];
                }
            } else {
                self.ema_clean[k] = fk_clean;
                self.ema_adv[k] = fk_adv;
            }
            self.discrepancy[k] = self.ema_clean[k]
                .iter()
                .zip(self.ema_adv[k].iter())
                .map(|(a, b)| (a - b).norm())
                .sum();
        }
        self.initialized = true;
        Ok(())
    }

    /// Draw a head assignment: slot 0 is the zero frequency, slots 1..M are
    /// i.i.d. multinomial draws from the normalized discrepancy (uniform over
    /// [0, k_max) when the discrepancy is all zero).
    pub fn sample_frequencies<R: Rng>(&self, heads: usize, rng: &mut R) -> FrequencyAssignment {
        let mut omegas = vec![0u32; heads.max(1)];
        let total: f64 = self.discrepancy.iter().sum();
        for slot in omegas.iter_mut().skip(1) {
            *slot = if total > 0.0 {
                let mut r = rng.gen_range(0.0..total);
                let mut chosen = self.k_max - 1;
                for (k, &d) in self.discrepancy.iter().enumerate() {
                    if r < d {
                        chosen = k;
                        break;
                    }
                    r -= d;
                }
                chosen as u32
            } else {
                rng.gen_range(0..self.k_max) as u32
            };
        }
        FrequencyAssignment::new(omegas).expect("slot 0 is zero by construction")
    }
}

/// Batch Fourier coefficient F_k = Σ_j outputs_j · e^{−2πik z_j}, one complex
/// value per output class.
pub fn fourier_coefficient(outputs: &[Tensor], zs: &[f64], k: u32) -> Result<Vec<Complex64>> {
    if outputs.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    if outputs.len() != zs.len() {
        return Err(Error::Shape(format!(
            "{} outputs but {} projections",
            outputs.len(),
            zs.len()
        )));
    }
    let classes = outputs[0].vector_len()?;
    let mut acc = vec![Complex64::new(0.0, 0.0); classes];
    for (out, &z) in outputs.iter().zip(zs.iter()) {
        if out.vector_len()? != classes {
            return Err(Error::Shape("inconsistent output lengths in batch".into()));
        }
        let angle = -TAU * f64::from(k) * z;
        let phase = Complex64::new(angle.cos(), angle.sin());
        for (a, &v) in acc.iter_mut().zip(out.data()) {
            *a += v * phase;
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Activation;
    use crate::phase::ProjectionSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tensors(rows: &[&[f64]]) -> Vec<Tensor> {
        rows.iter()
            .map(|r| Tensor::vector(r.to_vec()).unwrap())
            .collect()
    }

    #[test]
    fn k_zero_is_plain_sum() {
        let outputs = tensors(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let f = fourier_coefficient(&outputs, &[0.3, -0.8], 0).unwrap();
        assert_eq!(f[0], Complex64::new(1.0, 0.0));
        assert_eq!(f[1], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn single_sample_at_zero_projection() {
        let outputs = tensors(&[&[2.5, -1.5]]);
        for k in [0u32, 1, 7] {
            let f = fourier_coefficient(&outputs, &[0.0], k).unwrap();
            assert_eq!(f[0], Complex64::new(2.5, 0.0));
            assert_eq!(f[1], Complex64::new(-1.5, 0.0));
        }
    }

    #[test]
    fn worked_scalar_example() {
        // outputs [1,2,3,4] at z = [0, 0.25, 0.5, 0.75], k = 1 → −2+2i
        let outputs = tensors(&[&[1.0], &[2.0], &[3.0], &[4.0]]);
        let f = fourier_coefficient(&outputs, &[0.0, 0.25, 0.5, 0.75], 1).unwrap();
        assert!((f[0].re - (-2.0)).abs() < 1e-12, "re = {}", f[0].re);
        assert!((f[0].im - 2.0).abs() < 1e-12, "im = {}", f[0].im);
    }

    #[test]
    fn empty_batch_is_shape_error() {
        assert!(matches!(
            fourier_coefficient(&[], &[], 0),
            Err(Error::Shape(_))
        ));
    }

    fn small_model(seed: u64) -> PhaseModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let projection = ProjectionSpec::from_unnormalized(vec![0.6, -0.8], 1.0).unwrap();
        PhaseModel::seeded(2, &[4], Activation::Tanh, 2, 2, projection, &mut rng).unwrap()
    }

    #[test]
    fn identical_batches_give_zero_discrepancy() {
        let model = small_model(7);
        let batch = tensors(&[&[0.4, 0.2], &[-0.9, 0.5], &[0.1, -0.3]]);
        let mut state = FrequencyState::new(8, 0.9, 2).unwrap();
        let freqs = FrequencyAssignment::zeros(2);
        state
            .update_discrepancy(&batch, &batch, &model, &freqs)
            .unwrap();
        state
            .update_discrepancy(&batch, &batch, &model, &freqs)
            .unwrap();
        assert!(state.discrepancy().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn zero_decay_tracks_current_batch_exactly() {
        let model = small_model(8);
        let a = tensors(&[&[0.4, 0.2], &[-0.9, 0.5]]);
        let b = tensors(&[&[0.5, 0.1], &[-0.7, 0.6]]);
        let mut state = FrequencyState::new(4, 0.0, 2).unwrap();
        let freqs = FrequencyAssignment::zeros(2);
        // First update seeds the EMA; second with decay 0 must equal the
        // second batch's coefficients exactly.
        state.update_discrepancy(&a, &a, &model, &freqs).unwrap();
        state.update_discrepancy(&a, &b, &model, &freqs).unwrap();

        let outputs: Vec<Tensor> = b
            .iter()
            .map(|x| phase::phase_forward(&model, &freqs, x).unwrap())
            .collect();
        let zs: Vec<f64> = b
            .iter()
            .map(|x| phase::project(x, model.projection()).unwrap())
            .collect();
        for k in 0..4 {
            let expect = fourier_coefficient(&outputs, &zs, k as u32).unwrap();
            for c in 0..2 {
                assert!((state.ema_adv()[k][c] - expect[c]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn discrepancy_matches_brute_force_recomputation() {
        // Oracle: direct evaluation of the coefficient and discrepancy
        // formulas with explicit loops, EMA folded in by hand.
        let model = small_model(9);
        let clean1 = tensors(&[&[0.4, 0.2], &[-0.9, 0.5]]);
        let adv1 = tensors(&[&[0.45, 0.15], &[-0.85, 0.55]]);
        let clean2 = tensors(&[&[0.0, 0.6], &[0.3, -0.2]]);
        let adv2 = tensors(&[&[0.05, 0.55], &[0.25, -0.15]]);
        let beta = 0.9;
        let k_max = 5;
        let freqs = FrequencyAssignment::new(vec![0, 2]).unwrap();

        let mut state = FrequencyState::new(k_max, beta, 2).unwrap();
        state
            .update_discrepancy(&clean1, &adv1, &model, &freqs)
            .unwrap();
        state
            .update_discrepancy(&clean2, &adv2, &model, &freqs)
            .unwrap();

        let coeff = |batch: &[Tensor], k: usize| -> Vec<Complex64> {
            let mut acc = vec![Complex64::new(0.0, 0.0); 2];
            for x in batch {
                let out = phase::phase_forward(&model, &freqs, x).unwrap();
                let z = phase::project(x, model.projection()).unwrap();
                let angle = -TAU * k as f64 * z;
                for c in 0..2 {
                    acc[c] += out.data()[c] * Complex64::new(angle.cos(), angle.sin());
                }
            }
            acc
        };
        for k in 0..k_max {
            let mut d = 0.0;
            for c in 0..2 {
                let ema_c = beta * coeff(&clean1, k)[c] + (1.0 - beta) * coeff(&clean2, k)[c];
                let ema_a = beta * coeff(&adv1, k)[c] + (1.0 - beta) * coeff(&adv2, k)[c];
                d += (ema_c - ema_a).norm();
            }
            assert!(
                (state.discrepancy()[k] - d).abs() < 1e-12,
                "k = {k}: {} vs {d}",
                state.discrepancy()[k]
            );
        }
    }

    #[test]
    fn misaligned_batches_are_state_error() {
        let model = small_model(10);
        let a = tensors(&[&[0.4, 0.2], &[-0.9, 0.5]]);
        let b = tensors(&[&[0.4, 0.2]]);
        let mut state = FrequencyState::new(4, 0.9, 2).unwrap();
        assert!(matches!(
            state.update_discrepancy(&a, &b, &model, &FrequencyAssignment::zeros(2)),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn sampling_concentrated_mass() {
        let mut state = FrequencyState::new(16, 0.9, 1).unwrap();
        state.discrepancy[7] = 3.5;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let freqs = state.sample_frequencies(4, &mut rng);
            assert_eq!(freqs.omegas()[0], 0);
            assert!(freqs.omegas()[1..].iter().all(|&w| w == 7));
        }
    }

    #[test]
    fn single_head_assignment_is_zero() {
        let state = FrequencyState::new(16, 0.9, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let freqs = state.sample_frequencies(1, &mut rng);
        assert_eq!(freqs.omegas(), &[0]);
    }

    #[test]
    fn uniform_mass_law_of_large_numbers() {
        let mut state = FrequencyState::new(4, 0.9, 1).unwrap();
        for k in 0..4 {
            state.discrepancy[k] = 1.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 4];
        let draws = 10_000;
        let mut total = 0usize;
        while total < draws {
            let freqs = state.sample_frequencies(3, &mut rng);
            for &w in &freqs.omegas()[1..] {
                counts[w as usize] += 1;
                total += 1;
            }
        }
        for &c in &counts {
            let p = c as f64 / total as f64;
            assert!((p - 0.25).abs() < 0.02, "empirical p = {p}");
        }
    }

    #[test]
    fn zero_discrepancy_falls_back_to_uniform() {
        let state = FrequencyState::new(8, 0.9, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..200 {
            let freqs = state.sample_frequencies(2, &mut rng);
            assert!(freqs.omegas()[1] < 8);
            seen.insert(freqs.omegas()[1]);
        }
        assert!(seen.len() > 4, "uniform fallback should cover the range");
    }

    #[test]
    fn discrepancy_invariant_under_global_phase() {
        let model = small_model(11);
        let clean = tensors(&[&[0.4, 0.2], &[-0.9, 0.5]]);
        let adv = tensors(&[&[0.47, 0.11], &[-0.8, 0.62]]);
        let mut state = FrequencyState::new(6, 0.9, 2).unwrap();
        let freqs = FrequencyAssignment::new(vec![0, 3]).unwrap();
        state
            .update_discrepancy(&clean, &adv, &model, &freqs)
            .unwrap();
        let before = state.discrepancy().to_vec();
        // Rotate both EMA vectors by a global phase; d_k is a modulus of the
        // difference, so it must not change.
        let rot = Complex64::from_polar(1.0, 1.234);
        let ema_clean: Vec<Vec<Complex64>> = state
            .ema_clean()
            .iter()
            .map(|v| v.iter().map(|c| c * rot).collect())
            .collect();
        let ema_adv: Vec<Vec<Complex64>> = state
            .ema_adv()
            .iter()
            .map(|v| v.iter().map(|c| c * rot).collect())
            .collect();
        let rotated = FrequencyState::from_parts(
            6,
            0.9,
            2,
            ema_clean.clone(),
            ema_adv.clone(),
            before.clone(),
            true,
        )
        .unwrap();
        for k in 0..6 {
            let d: f64 = rotated.ema_clean()[k]
                .iter()
                .zip(rotated.ema_adv()[k].iter())
                .map(|(a, b)| (a - b).norm())
                .sum();
            assert!((d - before[k]).abs() < 1e-12);
        }
    }
}
