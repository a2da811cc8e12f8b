//! JSON-friendly matrix encoding: dimensions plus row-major data.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{IrrError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixFile {
    fn from(m: &DMatrix<f64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        }
    }
}

impl MatrixFile {
    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.rows * self.cols != self.data.len() {
            return Err(IrrError::dim(format!(
                "matrix file declares {}x{} but holds {} values",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.as_slice().to_vec(),
        }
    }

    pub fn to_vector(&self) -> Result<DVector<f64>> {
        Ok(DVector::from_column_slice(self.to_matrix()?.as_slice()))
    }
}

/// Boolean mask stored row-major as 0/1 bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskFile {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<u8>,
}

impl From<&DMatrix<bool>> for MaskFile {
    fn from(m: &DMatrix<bool>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().iter().map(|&b| u8::from(b)).collect(),
        }
    }
}

impl MaskFile {
    pub fn to_matrix(&self) -> Result<DMatrix<bool>> {
        if self.rows * self.cols != self.data.len() {
            return Err(IrrError::dim(
                "mask file size does not match its dimensions",
            ));
        }
        let flags: Vec<bool> = self.data.iter().map(|&b| b != 0).collect();
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &flags))
    }
}
