//! Dense n-dimensional arrays of `f64`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A shaped buffer of 64-bit reals, stored row-major.
///
/// The shape product always equals the buffer length; constructors enforce
/// this. Scalars use the shape `[1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl RealArray {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::shape(format!(
                "array shape {shape:?} has an empty or zero dimension"
            )));
        }
        if expect != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} wants {expect} elements, buffer has {}",
                data.len()
            )));
        }
        Ok(RealArray { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        assert!(!shape.is_empty() && n > 0, "zero-sized array shape {shape:?}");
        RealArray {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn scalar(v: f64) -> Self {
        RealArray {
            shape: vec![1],
            data: vec![v],
        }
    }

    /// 1-D array from a plain vector.
    pub fn vector(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "empty vector");
        RealArray {
            shape: vec![data.len()],
            data,
        }
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

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a scalar array.
    pub fn item(&self) -> f64 {
        assert!(self.is_scalar(), "item() on non-scalar shape {:?}", self.shape);
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
