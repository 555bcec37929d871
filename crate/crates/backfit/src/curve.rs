//! Component function tuples on the evaluation grid.

use crate::error::{Error, Result};
use crate::grid::EvalGrid;
use serde::{Deserialize, Serialize};

/// One additive component together with its derivative, both tabulated on the
/// grid. The stored derivative is the raw g_j', not h_j·g_j'; bandwidth
/// scaling happens wherever the local-linear tuple (g_j, h_j·g_j') is needed.
/// Keeping the derivative unscaled lets transfer reuse pooled-fit curves
/// under the target bandwidths without a rescaling pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentCurve {
    pub value: Vec<f64>,
    pub deriv: Vec<f64>,
}

impl ComponentCurve {
    pub fn zeros(len: usize) -> Self {
        Self {
            value: vec![0.0; len],
            deriv: vec![0.0; len],
        }
    }

    pub fn new(value: Vec<f64>, deriv: Vec<f64>) -> Result<Self> {
        if value.len() != deriv.len() {
            return Err(Error::DimensionMismatch {
                reason: format!(
                    "curve value has {} nodes but deriv has {}",
                    value.len(),
                    deriv.len()
                ),
            });
        }
        for (g, (&v, &d)) in value.iter().zip(&deriv).enumerate() {
            if !v.is_finite() || !d.is_finite() {
                return Err(Error::NonFinite { row: g, col: 0 });
            }
        }
        Ok(Self { value, deriv })
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.value.iter().all(|&v| v == 0.0) && self.deriv.iter().all(|&d| d == 0.0)
    }

    /// Largest absolute value entry.
    pub fn sup_value(&self) -> f64 {
        self.value.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            value: self.value.iter().map(|v| c * v).collect(),
            deriv: self.deriv.iter().map(|d| c * d).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Self {
            value: self
                .value
                .iter()
                .zip(&other.value)
                .map(|(a, b)| a + b)
                .collect(),
            deriv: self
                .deriv
                .iter()
                .zip(&other.deriv)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    /// Shifts the value component by a constant; the derivative is unchanged.
    pub fn shift_value(&self, c: f64) -> Self {
        Self {
            value: self.value.iter().map(|v| v - c).collect(),
            deriv: self.deriv.clone(),
        }
    }

    /// Linear interpolation of the value component at `x`.
    pub fn interp_value(&self, grid: &EvalGrid, x: f64) -> f64 {
        grid.interp(&self.value, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_checks() {
        assert!(ComponentCurve::new(vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(ComponentCurve::new(vec![f64::INFINITY], vec![0.0]).is_err());
        let c = ComponentCurve::new(vec![1.0, -3.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(c.len(), 2);
        assert!((c.sup_value() - 3.0).abs() < 1e-15);
        assert!(!c.is_zero());
        assert!(ComponentCurve::zeros(5).is_zero());
    }

    #[test]
    fn arithmetic() {
        let a = ComponentCurve::new(vec![1.0, 2.0], vec![0.0, 1.0]).unwrap();
        let b = ComponentCurve::new(vec![3.0, -2.0], vec![1.0, 1.0]).unwrap();
        let s = a.add(&b);
        assert_eq!(s.value, vec![4.0, 0.0]);
        assert_eq!(s.deriv, vec![1.0, 2.0]);
        let d = s.sub(&b);
        assert_eq!(d.value, a.value);
        let sc = a.scale(-2.0);
        assert_eq!(sc.value, vec![-2.0, -4.0]);
        let sh = a.shift_value(1.0);
        assert_eq!(sh.value, vec![0.0, 1.0]);
        assert_eq!(sh.deriv, a.deriv);
    }

    #[test]
    fn interpolation_uses_grid() {
        let g = EvalGrid::new(3).unwrap();
        let c = ComponentCurve::new(vec![0.0, 1.0, 4.0], vec![0.0; 3]).unwrap();
        assert!((c.interp_value(&g, 0.25) - 0.5).abs() < 1e-12);
        assert!((c.interp_value(&g, 1.0) - 4.0).abs() < 1e-15);
    }
}
