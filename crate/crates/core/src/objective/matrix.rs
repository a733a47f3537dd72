use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Row-major `rows x dim` matrix of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || dim == 0 {
            return Err(Error::Shape("feature matrix needs at least one row and column".into()));
        }
        if data.len() != rows * dim {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{dim} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("feature matrix contains non-finite values"));
        }
        Ok(Self { rows, dim, data })
    }

    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            rows,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        if let Some(bad) = rows.iter().position(|r| r.as_ref().len() != dim) {
            return Err(Error::Shape(format!("row {bad} has a different length than row 0")));
        }
        Self::new(rows.len(), dim, rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.dim == other.dim
    }

    /// Copy with every row scaled to unit length.
    pub fn normalized(&self) -> Result<Self> {
        let mut out = self.clone();
        for i in 0..self.rows {
            let n = norm(self.row(i));
            if n == 0.0 {
                return Err(Error::DegenerateFeature { row: i });
            }
            out.row_mut(i).iter_mut().for_each(|v| *v /= n);
        }
        Ok(out)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
