//! Dense `f64` tensors with a reverse-mode tape.
//!
//! [`Tensor`] is an immutable value: shape plus row-major data behind an
//! `Arc`, so cloning is cheap and parameter sets can be shared across
//! threads. Differentiable computation happens on a [`Tape`], which records
//! every op applied to its [`Var`] handles and replays them backwards.

mod gradcheck;
mod rng;
mod tape;

pub use gradcheck::{grad_check, grad_check_many, relative_error};
pub use rng::{dropout_mask, Mask, RngStream};
pub use tape::{ElementwiseKind, Gradients, Tape, Var};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SanError};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(SanError::shape("tensor", shape, "dimensions must be positive"));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(SanError::shape(
                "tensor",
                shape,
                format!("expected {n} values, got {}", data.len()),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: Arc::new(data),
        })
    }

    /// Builds a tensor whose shape is known to match `data`.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            shape,
            data: Arc::new(data),
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor::from_parts(shape.to_vec(), vec![0.0; n])
    }

    pub fn ones(shape: &[usize]) -> Self {
        Tensor::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor::from_parts(shape.to_vec(), vec![value; n])
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::from_parts(vec![1], vec![value])
    }

    pub fn vector(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "vector must be non-empty");
        Tensor::from_parts(vec![data.len()], data)
    }

    /// Column vector `[n, 1]`.
    pub fn column(data: Vec<f64>) -> Self {
        Tensor::from_parts(vec![data.len(), 1], data)
    }

    /// Matrix from row slices.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(SanError::shape("from_rows", &[r, c], "ragged rows"));
        }
        Tensor::new(&[r, c], rows.iter().flat_map(|row| row.iter().copied()).collect())
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Tensor::from_parts(vec![n, n], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Mutable access; copies the buffer only if it is shared.
    pub fn data_mut(&mut self) -> &mut [f64] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn into_vec(self) -> Vec<f64> {
        Arc::try_unwrap(self.data).unwrap_or_else(|shared| (*shared).clone())
    }

    /// Interprets rank-1 tensors as column vectors and rank-2 as matrices.
    pub fn matrix_dims(&self) -> Option<(usize, usize)> {
        matrix_dims(&self.shape)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.len() {
            return Err(SanError::dim("reshape", &self.shape, shape));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: Arc::clone(&self.data),
        })
    }

    /// Element `(row, col)` of a rank-1 or rank-2 tensor.
    pub fn at(&self, row: usize, col: usize) -> f64 {
        let (_, c) = self.matrix_dims().expect("rank <= 2");
        self.data[row * c + col]
    }

    /// Column `j` of a matrix as a plain vector.
    pub fn column_values(&self, j: usize) -> Vec<f64> {
        let (r, c) = self.matrix_dims().expect("rank <= 2");
        (0..r).map(|i| self.data[i * c + j]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Index of the largest entry; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.data)
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn matrix_dims(shape: &[usize]) -> Option<(usize, usize)> {
    match *shape {
        [n] => Some((n, 1)),
        [r, c] => Some((r, c)),
        _ => None,
    }
}

/// Serialisable shape/data pair used by checkpoints and test fixtures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl From<&Tensor> for TensorRecord {
    fn from(t: &Tensor) -> Self {
        TensorRecord {
            shape: t.shape.clone(),
            data: t.data.to_vec(),
        }
    }
}
