// SPDX-License-Identifier: MIT OR Apache-2.0

//! Readers and writers for the audit's file artifacts.

mod npy;
mod tables;

pub use npy::{encode_header, read_header, read_matrix, write_matrix, NpyColumnReader, NpyHeader};
pub use tables::*;

use crate::error::{AuditError, Result};

/// What the columns of an [`ActivationMatrix`] represent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    /// Rectified SAE encodings, all values non-negative.
    SaeFeatures,
    /// Raw residual-stream vectors.
    RawResidual,
}

/// Row-major `n_rows × n_cols` float32 matrix; row `i` belongs to task `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f32>,
    kind: MatrixKind,
}

impl ActivationMatrix {
    pub fn new(n_rows: usize, n_cols: usize, data: Vec<f32>, kind: MatrixKind) -> Result<Self> {
        if n_rows.checked_mul(n_cols) != Some(data.len()) {
            return Err(AuditError::Shape(format!(
                "{n_rows} x {n_cols} matrix needs {} values, got {}",
                n_rows.saturating_mul(n_cols),
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(AuditError::Domain(format!(
                "non-finite value at row {}, column {}",
                i / n_cols,
                i % n_cols
            )));
        }
        if kind == MatrixKind::SaeFeatures {
            if let Some(i) = data.iter().position(|&v| v < 0.0) {
                return Err(AuditError::Domain(format!(
                    "negative SAE activation {} at row {}, column {}",
                    data[i],
                    i / n_cols,
                    i % n_cols
                )));
            }
        }
        Ok(ActivationMatrix {
            n_rows,
            n_cols,
            data,
            kind,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.n_cols..(r + 1) * self.n_cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.n_cols + c]
    }

    pub fn column(&self, c: usize) -> Vec<f32> {
        (0..self.n_rows).map(|r| self.get(r, c)).collect()
    }

    /// Keeps the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> ActivationMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        ActivationMatrix {
            n_rows: rows.len(),
            n_cols: self.n_cols,
            data,
            kind: self.kind,
        }
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> ActivationMatrix {
        let mut data = Vec::with_capacity(self.n_rows * cols.len());
        for r in 0..self.n_rows {
            let row = self.row(r);
            data.extend(cols.iter().map(|&c| row[c]));
        }
        ActivationMatrix {
            n_rows: self.n_rows,
            n_cols: cols.len(),
            data,
            kind: self.kind,
        }
    }
}

/// Aborts unless the matrix has one row per prediction.
pub fn check_row_alignment(matrix: &ActivationMatrix, n_predictions: usize) -> Result<()> {
    if matrix.n_rows() != n_predictions {
        return Err(AuditError::Integrity(format!(
            "activation matrix has {} rows but the prediction sheet has {} rows",
            matrix.n_rows(),
            n_predictions
        )));
    }
    Ok(())
}
