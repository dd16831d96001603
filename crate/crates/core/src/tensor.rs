//! Row-major double-precision tensor.
//!
//! The checked constructors reject NaN/Inf and shape/data length mismatches;
//! values produced by internal arithmetic go through [`Tensor::from_computed`]
//! which only debug-asserts finiteness.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Checked construction: data length must equal the product of extents
    /// and every value must be finite.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {:?} (expected {})",
                data.len(),
                shape,
                expected
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "tensor element {} is {}",
                i, data[i]
            )));
        }
        Ok(Self { shape, data })
    }

    /// Checked 1-D construction.
    pub fn vector(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::new(vec![n], data)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    /// Construction from values computed inside this crate. Finiteness is a
    /// debug assertion only.
    pub(crate) fn from_computed(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        debug_assert!(data.iter().all(|v| !v.is_nan()));
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Flat length if 1-D, otherwise a shape error.
    pub fn vector_len(&self) -> Result<usize> {
        if self.shape.len() == 1 {
            Ok(self.shape[0])
        } else {
            Err(Error::Shape(format!(
                "expected a 1-D tensor, got shape {:?}",
                self.shape
            )))
        }
    }

    pub fn linf_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}
