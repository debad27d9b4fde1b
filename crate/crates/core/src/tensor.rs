//! Dense f64 containers with validated shapes.
//!
//! These are storage and interchange types: computation happens on plain
//! slices (see [`crate::kernels`]) so the same code can run on either f64
//! values or tape variables. Constructors reject non-finite data so anything
//! held in a `Vector`/`Matrix`/`Tensor3` is known finite.

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite { op: "Vector::new" });
        }
        Ok(Vector { data })
    }

    pub fn zeros(dim: usize) -> Self {
        Vector {
            data: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

/// Row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(CoreError::DimensionMismatch {
                op: "Matrix::new",
                detail: format!("{}x{} needs {} values, got {}", rows, cols, rows * cols, data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite { op: "Matrix::new" });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(CoreError::DimensionMismatch {
                op: "Matrix::from_rows",
                detail: "ragged rows".into(),
            });
        }
        Matrix::new(r, c, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }
}

/// Row-major rank-3 tensor: `items x vectors x dim`, e.g. a batch of
/// per-video frame features.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    items: usize,
    vectors: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn new(items: usize, vectors: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != items * vectors * dim {
            return Err(CoreError::DimensionMismatch {
                op: "Tensor3::new",
                detail: format!(
                    "{}x{}x{} needs {} values, got {}",
                    items,
                    vectors,
                    dim,
                    items * vectors * dim,
                    data.len()
                ),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite { op: "Tensor3::new" });
        }
        Ok(Tensor3 {
            items,
            vectors,
            dim,
            data,
        })
    }

    pub fn items(&self) -> usize {
        self.items
    }

    pub fn vectors(&self) -> usize {
        self.vectors
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Copy of item `i` as a `vectors x dim` matrix.
    pub fn item(&self, i: usize) -> Matrix {
        let stride = self.vectors * self.dim;
        Matrix {
            rows: self.vectors,
            cols: self.dim,
            data: self.data[i * stride..(i + 1) * stride].to_vec(),
        }
    }
}
