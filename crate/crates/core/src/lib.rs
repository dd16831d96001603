//! Desk-scale toolkit for phase-shifted adversarial training.
//!
//! The crate is organized around the pipeline it implements:
//!
//! - [`tensor`] / [`net`]: a minimal dense-network engine (forward, backward,
//!   losses, SGD) in double precision with deterministic semantics.
//! - [`phase`]: the multi-headed phase-shift model — a shared feature
//!   extractor, per-frequency classifier heads realized as cos/sin pairs, and
//!   the principal-component projection that reduces inputs to a scalar phase
//!   coordinate.
//! - [`freq`]: Fourier-coefficient estimation of model outputs along the
//!   projection, the EMA'd clean-vs-adversarial discrepancy, and multinomial
//!   frequency sampling.
//! - [`attack`]: L∞-bounded FGSM/PGD attacks, expectation-over-transformation
//!   gradients, frequency-mimicking adaptive attacks, and robust-accuracy
//!   evaluation.
//! - [`train`]: the phase-shifted training loops (single-step and iterative),
//!   a standard adversarial-training baseline, and epoch metrics.
//! - [`spectrum`]: Gaussian-filter splitting of labels/outputs into low- and
//!   high-frequency parts and the convergence errors computed from them.
//! - [`data`]: synthetic dataset generators and the binary image-record
//!   reader used by the experiment harness.
//!
//! Everything is seeded and single-threaded by default so that a full
//! training run is bit-reproducible from its configuration.

pub mod attack;
pub mod data;
pub mod error;
pub mod freq;
pub mod net;
pub mod phase;
pub mod seed;
pub mod spectrum;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
