//! Dataset generation and ingestion.
//!
//! Three kinds are supported: a sine-mixture task along a fixed direction
//! (regression target, optionally binarized by sign into two classes), a
//! two-ring classification task, and binary image records in the common
//! label-byte-plus-3072-pixel-bytes layout.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;

pub const IMAGE_PIXELS: usize = 32 * 32 * 3;
pub const IMAGE_RECORD_BYTES: usize = 1 + IMAGE_PIXELS;
pub const IMAGE_CLASSES: usize = 10;

#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Vec<Tensor>,
    pub labels: Vec<usize>,
    /// Raw regression targets, present for the sine mixture.
    pub targets: Option<Vec<f64>>,
    pub num_classes: usize,
    pub input_dim: usize,
    pub input_min: f64,
    pub input_max: f64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// One-hot label rows (classification view).
    pub fn one_hot_labels(&self) -> Vec<Vec<f64>> {
        self.labels
            .iter()
            .map(|&y| {
                let mut row = vec![0.0; self.num_classes];
                row[y] = 1.0;
                row
            })
            .collect()
    }
}

/// The sine-mixture target g(x) = Σ_h sin(2π f_h (x·u)) with the fixed
/// direction u = (1,…,1)/√d.
pub fn sine_mix_target(x: &[f64], frequencies: &[f64]) -> f64 {
    let scale = 1.0 / (x.len() as f64).sqrt();
    let t: f64 = x.iter().sum::<f64>() * scale;
    frequencies.iter().map(|f| (TAU * f * t).sin()).sum()
}

/// Sine mixture on the cube [−1,1]^d. `noise` adds uniform jitter of that
/// amplitude to the target before binarization.
pub fn gen_sine_mix(
    n: usize,
    dim: usize,
    frequencies: &[f64],
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::Config("dataset needs at least 2 samples".into()));
    }
    if dim == 0 {
        return Err(Error::Config("input dimension must be at least 1".into()));
    }
    if frequencies.is_empty() {
        return Err(Error::Config("sine mixture needs at least one frequency".into()));
    }
    let mut inputs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut g = sine_mix_target(&x, frequencies);
        if noise > 0.0 {
            g += rng.gen_range(-noise..noise);
        }
        labels.push(usize::from(g > 0.0));
        targets.push(g);
        inputs.push(Tensor::vector(x)?);
    }
    Ok(Dataset {
        inputs,
        labels,
        targets: Some(targets),
        num_classes: 2,
        input_dim: dim,
        input_min: -1.0,
        input_max: 1.0,
    })
}

/// Two concentric annuli in [−1,1]²: class 0 on radii [0.25, 0.45], class 1
/// on [0.70, 0.95], labels drawn Bernoulli(1/2). `noise` jitters the radius.
pub fn gen_rings(n: usize, noise: f64, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::Config("dataset needs at least 2 samples".into()));
    }
    let mut inputs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label = usize::from(rng.gen::<bool>());
        let radius = if label == 0 {
            rng.gen_range(0.25..0.45)
        } else {
            rng.gen_range(0.70..0.95)
        };
        let radius = if noise > 0.0 {
            radius + rng.gen_range(-noise..noise)
        } else {
            radius
        };
        let angle = rng.gen_range(0.0..TAU);
        let x = (radius * angle.cos()).clamp(-1.0, 1.0);
        let y = (radius * angle.sin()).clamp(-1.0, 1.0);
        inputs.push(Tensor::vector(vec![x, y])?);
        labels.push(label);
    }
    Ok(Dataset {
        inputs,
        labels,
        targets: None,
        num_classes: 2,
        input_dim: 2,
        input_min: -1.0,
        input_max: 1.0,
    })
}

/// Parse binary image records: one label byte followed by 32×32×3 pixel
/// bytes, rescaled to [0,1]. `limit = 0` keeps every record.
pub fn parse_image_binary(bytes: &[u8], limit: usize) -> Result<Dataset> {
    if bytes.is_empty() {
        return Err(Error::Format("image file is empty".into()));
    }
    if bytes.len() % IMAGE_RECORD_BYTES != 0 {
        return Err(Error::Format(format!(
            "file length {} is not a multiple of the record size {}",
            bytes.len(),
            IMAGE_RECORD_BYTES
        )));
    }
    let records = bytes.len() / IMAGE_RECORD_BYTES;
    let keep = if limit == 0 { records } else { limit.min(records) };
    let mut inputs = Vec::with_capacity(keep);
    let mut labels = Vec::with_capacity(keep);
    for r in 0..keep {
        let rec = &bytes[r * IMAGE_RECORD_BYTES..(r + 1) * IMAGE_RECORD_BYTES];
        let label = rec[0] as usize;
        if label >= IMAGE_CLASSES {
            return Err(Error::Format(format!(
                "record {r} has label byte {label}, expected < {IMAGE_CLASSES}"
            )));
        }
        labels.push(label);
        let pixels: Vec<f64> = rec[1..].iter().map(|&b| f64::from(b) / 255.0).collect();
        inputs.push(Tensor::vector(pixels)?);
    }
    Ok(Dataset {
        inputs,
        labels,
        targets: None,
        num_classes: IMAGE_CLASSES,
        input_dim: IMAGE_PIXELS,
        input_min: 0.0,
        input_max: 1.0,
    })
}

/// Shuffled train/test split; the test part receives
/// `round(n·test_fraction)` samples (at least 1 when the fraction is
/// positive).
pub fn split(dataset: &Dataset, test_fraction: f64, rng: &mut ChaCha8Rng) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::Config(format!(
            "test fraction must lie in [0, 1), got {test_fraction}"
        )));
    }
    let n = dataset.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut test_n = (n as f64 * test_fraction).round() as usize;
    if test_fraction > 0.0 {
        test_n = test_n.clamp(1, n - 1);
    }
    let (test_idx, train_idx) = idx.split_at(test_n);
    let take = |ids: &[usize]| Dataset {
        inputs: ids.iter().map(|&i| dataset.inputs[i].clone()).collect(),
        labels: ids.iter().map(|&i| dataset.labels[i]).collect(),
        targets: dataset
            .targets
            .as_ref()
            .map(|t| ids.iter().map(|&i| t[i]).collect()),
        num_classes: dataset.num_classes,
        input_dim: dataset.input_dim,
        input_min: dataset.input_min,
        input_max: dataset.input_max,
    };
    Ok((take(train_idx), take(test_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn sine_mix_single_frequency_worked_value() {
        // f = 1, d = 1: target at x = 0.25 is sin(π/2) = 1.
        assert!((sine_mix_target(&[0.25], &[1.0]) - 1.0).abs() < 1e-15);
        assert!(sine_mix_target(&[0.0], &[1.0]).abs() < 1e-15);
    }

    #[test]
    fn sine_mix_generation_is_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ds = gen_sine_mix(100, 2, &[1.0, 3.0], 0.0, &mut rng).unwrap();
        assert_eq!(ds.len(), 100);
        let targets = ds.targets.as_ref().unwrap();
        for i in 0..ds.len() {
            let g = sine_mix_target(ds.inputs[i].data(), &[1.0, 3.0]);
            assert!((g - targets[i]).abs() < 1e-12);
            assert_eq!(ds.labels[i], usize::from(g > 0.0));
            assert!(ds.inputs[i].data().iter().all(|v| (-1.0..1.0).contains(v)));
        }
    }

    #[test]
    fn rings_are_balanced_and_separated() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ds = gen_rings(10_000, 0.0, &mut rng).unwrap();
        let ones = ds.labels.iter().filter(|&&l| l == 1).count() as f64;
        let fraction = ones / ds.len() as f64;
        assert!((fraction - 0.5).abs() < 0.01, "class-1 fraction {fraction}");
        for i in 0..ds.len() {
            let r = ds.inputs[i].l2_norm();
            if ds.labels[i] == 0 {
                assert!((0.25..0.45).contains(&r));
            } else {
                assert!((0.70..0.95).contains(&r));
            }
        }
    }

    #[test]
    fn image_binary_record_arithmetic() {
        let mut bytes = vec![0u8; 2 * IMAGE_RECORD_BYTES];
        bytes[0] = 3;
        bytes[1] = 255;
        bytes[IMAGE_RECORD_BYTES] = 9;
        let ds = parse_image_binary(&bytes, 0).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.labels, vec![3, 9]);
        assert_eq!(ds.inputs[0].data()[0], 1.0);
        assert_eq!(ds.input_dim, IMAGE_PIXELS);
    }

    #[test]
    fn image_binary_malformed_length() {
        let bytes = vec![0u8; IMAGE_RECORD_BYTES + 7];
        assert!(matches!(
            parse_image_binary(&bytes, 0),
            Err(Error::Format(_))
        ));
        assert!(matches!(parse_image_binary(&[], 0), Err(Error::Format(_))));
    }

    #[test]
    fn image_binary_bad_label() {
        let mut bytes = vec![0u8; IMAGE_RECORD_BYTES];
        bytes[0] = 10;
        assert!(matches!(
            parse_image_binary(&bytes, 0),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ds = gen_sine_mix(50, 1, &[1.0], 0.0, &mut rng).unwrap();
        let mut ra = ChaCha8Rng::seed_from_u64(9);
        let (train_a, test_a) = split(&ds, 0.2, &mut ra).unwrap();
        assert_eq!(test_a.len(), 10);
        assert_eq!(train_a.len(), 40);
        let mut rb = ChaCha8Rng::seed_from_u64(9);
        let (train_b, _) = split(&ds, 0.2, &mut rb).unwrap();
        assert_eq!(train_a.inputs[0], train_b.inputs[0]);
    }
}
