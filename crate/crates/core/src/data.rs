//! Row-major feature matrices and `(X, Y)` samples.

use crate::error::{Error, Result};

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    values: Vec<f64>,
    dim: usize,
}

impl Features {
    pub fn new(values: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, got: 0 });
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::LengthMismatch {
                what: "feature values and dimension",
                left: values.len(),
                right: dim,
            });
        }
        Ok(Self { values, dim })
    }

    /// One-dimensional features from a column.
    pub fn from_column(column: Vec<f64>) -> Self {
        Self { values: column, dim: 1 }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(1, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::new(values, dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self { values, dim: self.dim }
    }
}

/// Features with an aligned response vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Features,
    pub response: Vec<f64>,
}

impl Dataset {
    pub fn new(features: Features, response: Vec<f64>) -> Result<Self> {
        if features.len() != response.len() {
            return Err(Error::LengthMismatch {
                what: "feature rows and responses",
                left: features.len(),
                right: response.len(),
            });
        }
        Ok(Self { features, response })
    }

    pub fn from_column(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        Self::new(Features::from_column(x), y)
    }

    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn y(&self, i: usize) -> f64 {
        self.response[i]
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select(indices),
            response: indices.iter().map(|&i| self.response[i]).collect(),
        }
    }

    pub fn ensure_finite(&self) -> Result<()> {
        if self.features.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        if self.response.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("response"));
        }
        Ok(())
    }

    /// Mean absolute response, used to normalize interval lengths.
    pub fn mean_abs_response(&self) -> f64 {
        self.response.iter().map(|y| y.abs()).sum::<f64>() / self.len().max(1) as f64
    }
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
