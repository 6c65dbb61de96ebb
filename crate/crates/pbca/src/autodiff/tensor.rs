//! Dense row-major f64 tensor.

use crate::error::{Error, Result};

/// Flat row-major tensor of 64-bit floats. `dims` may have any rank but the
/// graph only ever builds rank-1 and rank-2 values. Finiteness is not checked
/// at construction; the graph checks every intermediate during evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    values: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("zero-sized dimension in {dims:?}")));
        }
        let expected: usize = dims.iter().product();
        if expected != values.len() {
            return Err(Error::Shape(format!(
                "dims {dims:?} imply {expected} values, got {}",
                values.len()
            )));
        }
        Ok(Tensor { dims, values })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let len = dims.iter().product();
        Tensor { dims, values: vec![0.0; len] }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { dims: vec![1], values: vec![v] }
    }

    pub fn vector(values: Vec<f64>) -> Self {
        Tensor { dims: vec![values.len()], values }
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], values)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.dims == [1]
    }

    /// Sole value of a scalar tensor.
    pub fn item(&self) -> Result<f64> {
        if !self.is_scalar() {
            return Err(Error::Contract(format!(
                "expected scalar tensor, got dims {:?}",
                self.dims
            )));
        }
        Ok(self.values[0])
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    /// Row count of a rank-2 tensor.
    pub fn rows(&self) -> usize {
        self.dims[0]
    }

    /// Column count of a rank-2 tensor.
    pub fn cols(&self) -> usize {
        self.dims[1]
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.dims[1] + col]
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
