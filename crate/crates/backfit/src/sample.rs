//! One population's observations: an n×d covariate matrix on [0,1]^d plus a
//! response vector.

use crate::error::{Error, Result};

/// Validated regression sample. Covariates are stored column-major because
/// every smoothing operation walks one covariate at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    columns: Vec<Vec<f64>>,
    y: Vec<f64>,
    n: usize,
}

impl Sample {
    /// Builds a sample from covariate columns and responses, rejecting
    /// non-finite entries, covariates outside [0, 1], ragged columns, and
    /// samples with fewer than two rows.
    pub fn new(columns: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::SampleTooSmall { need: 2, got: n });
        }
        if columns.is_empty() {
            return Err(Error::InvalidConfig {
                reason: "sample has no covariate columns".into(),
            });
        }
        for (row, &v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row, col: usize::MAX });
            }
        }
        for (col, column) in columns.iter().enumerate() {
            if column.len() != n {
                return Err(Error::DimensionMismatch {
                    reason: format!(
                        "covariate column {col} has {} rows but the response has {n}",
                        column.len()
                    ),
                });
            }
            for (row, &v) in column.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite { row, col });
                }
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::DomainViolation { row, col, value: v });
                }
            }
        }
        Ok(Self { columns, y, n })
    }

    /// Builds a sample from row-major covariate data.
    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::SampleTooSmall { need: 2, got: 0 });
        }
        let d = rows[0].len();
        let mut columns = vec![Vec::with_capacity(rows.len()); d];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    reason: format!("row {i} has {} entries, expected {d}", row.len()),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                columns[j].push(v);
            }
        }
        Self::new(columns, y)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.columns.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn y_mean(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.n as f64
    }

    /// Row `i` as a covariate vector (allocates; used by prediction paths).
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// Reorders rows by the given permutation of 0..n.
    pub fn permute_rows(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::DimensionMismatch {
                reason: format!("permutation length {} != n {}", perm.len(), self.n),
            });
        }
        let columns = self
            .columns
            .iter()
            .map(|c| perm.iter().map(|&i| c[i]).collect())
            .collect();
        let y = perm.iter().map(|&i| self.y[i]).collect();
        Ok(Self {
            columns,
            y,
            n: self.n,
        })
    }

    /// Keeps only the rows in `idx`, in order.
    pub fn subset_rows(&self, idx: &[usize]) -> Result<Self> {
        if idx.len() < 2 {
            return Err(Error::SampleTooSmall {
                need: 2,
                got: idx.len(),
            });
        }
        let columns = self
            .columns
            .iter()
            .map(|c| idx.iter().map(|&i| c[i]).collect())
            .collect();
        let y = idx.iter().map(|&i| self.y[i]).collect();
        Ok(Self {
            columns,
            y,
            n: idx.len(),
        })
    }

    /// Reorders covariate columns by the given permutation of 0..d.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.d() {
            return Err(Error::DimensionMismatch {
                reason: format!("permutation length {} != d {}", perm.len(), self.d()),
            });
        }
        let columns = perm.iter().map(|&j| self.columns[j].clone()).collect();
        Ok(Self {
            columns,
            y: self.y.clone(),
            n: self.n,
        })
    }
}
