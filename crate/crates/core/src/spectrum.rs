//! Gaussian-filter frequency split and convergence errors.
//!
//! The low-frequency part of a value field over the dataset is the
//! kernel-weighted average
//!
//! ```text
//! low_j = Σ_m v_m G(x_j − x_m) / Σ_m G(x_j − x_m),
//! G(u) = exp(−‖u‖² / (2·variance))
//! ```
//!
//! and the high part is the pointwise remainder. The convergence errors
//! compare the low/high parts of the labels with the low/high parts of the
//! model outputs, each normalized by the label part's energy.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::seq::SliceRandom;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    /// Variance of the Gaussian kernel (the denominator is 2·variance).
    pub variance: f64,
    /// Maximum number of points fed to the O(N²) kernel; larger datasets are
    /// subsampled with a seeded choice.
    pub subsample_cap: usize,
    pub subsample_seed: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            variance: 3.0,
            subsample_cap: 2048,
            subsample_seed: 0,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.variance > 0.0) || !self.variance.is_finite() {
            return Err(Error::Config(format!(
                "filter variance must be positive, got {}",
                self.variance
            )));
        }
        if self.subsample_cap < 2 {
            return Err(Error::Config("subsample cap must be at least 2".into()));
        }
        Ok(())
    }
}

/// Normalized Gaussian kernel weights over a fixed point set, precomputed so
/// repeated filterings of different value fields reuse the O(N²) part.
#[derive(Debug, Clone)]
pub struct GaussianKernel {
    /// Row-stochastic N×N weight matrix, row-major.
    weights: Vec<f64>,
    n: usize,
}

impl GaussianKernel {
    pub fn new(points: &[Tensor], cfg: &FilterConfig) -> Result<Self> {
        cfg.validate()?;
        if points.is_empty() {
            return Err(Error::Shape("kernel needs at least one point".into()));
        }
        let n = points.len();
        let dim = points[0].vector_len()?;
        for p in points {
            if p.vector_len()? != dim {
                return Err(Error::Shape("inconsistent point dimensions".into()));
            }
        }
        let inv = 1.0 / (2.0 * cfg.variance);
        let mut weights = vec![0.0; n * n];
        for j in 0..n {
            let mut norm = 0.0;
            for m in 0..n {
                let dist2: f64 = points[j]
                    .data()
                    .iter()
                    .zip(points[m].data())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                let w = (-dist2 * inv).exp();
                weights[j * n + m] = w;
                norm += w;
            }
            for m in 0..n {
                weights[j * n + m] /= norm;
            }
        }
        Ok(Self { weights, n })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Low-frequency part of a value field (one vector per point).
    pub fn low_pass(&self, values: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if values.len() != self.n {
            return Err(Error::Shape(format!(
                "{} values for {} kernel points",
                values.len(),
                self.n
            )));
        }
        let width = values[0].len();
        if values.iter().any(|v| v.len() != width) {
            return Err(Error::Shape("inconsistent value widths".into()));
        }
        let mut out = vec![vec![0.0; width]; self.n];
        for j in 0..self.n {
            let row = &self.weights[j * self.n..(j + 1) * self.n];
            let acc = &mut out[j];
            for (m, &w) in row.iter().enumerate() {
                for (a, v) in acc.iter_mut().zip(values[m].iter()) {
                    *a += w * v;
                }
            }
        }
        Ok(out)
    }
}

/// One-shot low pass over `points`/`values`.
pub fn gaussian_low_pass(
    points: &[Tensor],
    values: &[Vec<f64>],
    cfg: &FilterConfig,
) -> Result<Vec<Vec<f64>>> {
    if points.len() != values.len() {
        return Err(Error::Shape(format!(
            "{} points but {} values",
            points.len(),
            values.len()
        )));
    }
    GaussianKernel::new(points, cfg)?.low_pass(values)
}

/// Convergence errors of the low/high parts, with `defined` flags cleared
/// when the corresponding label part has zero energy (the error is then
/// reported as NaN rather than raised).
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub e_low: f64,
    pub e_high: f64,
    pub e_low_defined: bool,
    pub e_high_defined: bool,
    pub per_point: Option<Vec<PointSplit>>,
}

/// Per-point norms of the split, for plot-ready dumps.
#[derive(Debug, Clone)]
pub struct PointSplit {
    pub index: usize,
    pub label_low_norm: f64,
    pub label_high_norm: f64,
    pub output_low_norm: f64,
    pub output_high_norm: f64,
    pub err_low: f64,
    pub err_high: f64,
}

/// Subsample indices for datasets above the cap (seeded, sorted for
/// deterministic order).
pub fn subsample_indices(n: usize, cfg: &FilterConfig) -> Vec<usize> {
    if n <= cfg.subsample_cap {
        return (0..n).collect();
    }
    let mut rng = crate::seed::stream(cfg.subsample_seed, "spectrum-subsample");
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx.truncate(cfg.subsample_cap);
    idx.sort_unstable();
    idx
}

/// Compute the errors from a precomputed kernel, label field, and output
/// field (both fields aligned with the kernel's points).
pub fn frequency_errors_with_kernel(
    kernel: &GaussianKernel,
    labels: &[Vec<f64>],
    outputs: &[Vec<f64>],
    keep_points: bool,
) -> Result<SpectrumReport> {
    if labels.len() != outputs.len() {
        return Err(Error::Shape("labels and outputs are misaligned".into()));
    }
    let label_low = kernel.low_pass(labels)?;
    let output_low = kernel.low_pass(outputs)?;

    let mut num_low = 0.0;
    let mut den_low = 0.0;
    let mut num_high = 0.0;
    let mut den_high = 0.0;
    let mut per_point = keep_points.then(Vec::new);
    for j in 0..labels.len() {
        let mut nl = 0.0;
        let mut dl = 0.0;
        let mut nh = 0.0;
        let mut dh = 0.0;
        let mut ol2 = 0.0;
        let mut oh2 = 0.0;
        for c in 0..labels[j].len() {
            let yl = label_low[j][c];
            let yh = labels[j][c] - yl;
            let tl = output_low[j][c];
            let th = outputs[j][c] - tl;
            nl += (yl - tl) * (yl - tl);
            dl += yl * yl;
            nh += (yh - th) * (yh - th);
            dh += yh * yh;
            ol2 += tl * tl;
            oh2 += th * th;
        }
        num_low += nl;
        den_low += dl;
        num_high += nh;
        den_high += dh;
        if let Some(points) = per_point.as_mut() {
            points.push(PointSplit {
                index: j,
                label_low_norm: dl.sqrt(),
                label_high_norm: dh.sqrt(),
                output_low_norm: ol2.sqrt(),
                output_high_norm: oh2.sqrt(),
                err_low: nl.sqrt(),
                err_high: nh.sqrt(),
            });
        }
    }
    let (e_low, e_low_defined) = if den_low > 0.0 {
        ((num_low / den_low).sqrt(), true)
    } else {
        (f64::NAN, false)
    };
    let (e_high, e_high_defined) = if den_high > 0.0 {
        ((num_high / den_high).sqrt(), true)
    } else {
        (f64::NAN, false)
    };
    Ok(SpectrumReport {
        e_low,
        e_high,
        e_low_defined,
        e_high_defined,
        per_point,
    })
}

/// Convergence errors of a model functional against a labeled dataset. The
/// model is queried once per (possibly subsampled) point.
pub fn frequency_errors<F>(
    mut model: F,
    points: &[Tensor],
    labels: &[Vec<f64>],
    cfg: &FilterConfig,
    keep_points: bool,
) -> Result<SpectrumReport>
where
    F: FnMut(&Tensor) -> Result<Vec<f64>>,
{
    if points.is_empty() {
        return Err(Error::Shape("empty dataset".into()));
    }
    if points.len() != labels.len() {
        return Err(Error::Shape("points and labels are misaligned".into()));
    }
    let idx = subsample_indices(points.len(), cfg);
    let sub_points: Vec<Tensor> = idx.iter().map(|&i| points[i].clone()).collect();
    let sub_labels: Vec<Vec<f64>> = idx.iter().map(|&i| labels[i].clone()).collect();
    let mut outputs = Vec::with_capacity(sub_points.len());
    for p in &sub_points {
        outputs.push(model(p)?);
    }
    let kernel = GaussianKernel::new(&sub_points, cfg)?;
    frequency_errors_with_kernel(&kernel, &sub_labels, &outputs, keep_points)
}
