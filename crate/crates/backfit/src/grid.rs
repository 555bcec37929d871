//! Shared evaluation grid on [0, 1] and trapezoid-rule helpers.
//!
//! Every function in this crate is represented by its values on one uniform
//! grid including both endpoints, and every integral is the trapezoid rule on
//! that grid. Keeping a single discretization contract is what makes the
//! backfitting identities (normalization, centering, objective expansion)
//! hold to float precision rather than to quadrature precision.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Default number of grid points for diagnostics and artifacts.
pub const DEFAULT_GRID_SIZE: usize = 401;

/// Default number of grid points used by fits (coarser for speed).
pub const FIT_GRID_SIZE: usize = 101;

/// Uniform grid `0 = x_0 < x_1 < ... < x_{G-1} = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    points: Vec<f64>,
    spacing: f64,
}

impl EvalGrid {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidConfig {
                reason: format!("grid size must be at least 2, got {size}"),
            });
        }
        let spacing = 1.0 / (size - 1) as f64;
        let points = (0..size)
            .map(|i| {
                if i + 1 == size {
                    1.0
                } else {
                    i as f64 * spacing
                }
            })
            .collect();
        Ok(Self { points, spacing })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Trapezoid quadrature weight of node `idx` (half weight at endpoints).
    pub fn quad_weight(&self, idx: usize) -> f64 {
        if idx == 0 || idx + 1 == self.points.len() {
            0.5 * self.spacing
        } else {
            self.spacing
        }
    }

    /// Trapezoid integral of grid values over [0, 1].
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.points.len());
        let mut sum = 0.5 * (values[0] + values[values.len() - 1]);
        for v in &values[1..values.len() - 1] {
            sum += v;
        }
        sum * self.spacing
    }

    /// Trapezoid integral of `f(node index)` over [0, 1].
    pub fn integrate_fn(&self, mut f: impl FnMut(usize) -> f64) -> f64 {
        let g = self.points.len();
        let mut sum = 0.5 * (f(0) + f(g - 1));
        for i in 1..g - 1 {
            sum += f(i);
        }
        sum * self.spacing
    }

    /// Linear interpolation of grid values at `x` in [0, 1].
    pub fn interp(&self, values: &[f64], x: f64) -> f64 {
        debug_assert_eq!(values.len(), self.points.len());
        let g = self.points.len();
        if x <= 0.0 {
            return values[0];
        }
        if x >= 1.0 {
            return values[g - 1];
        }
        let pos = x / self.spacing;
        let lo = (pos.floor() as usize).min(g - 2);
        let frac = pos - lo as f64;
        values[lo] * (1.0 - frac) + values[lo + 1] * frac
    }

    /// Indices of the closed node range intersecting `[x - h, x + h]`.
    pub fn band(&self, x: f64, h: f64) -> (usize, usize) {
        let g = self.points.len();
        let lo = ((x - h) / self.spacing).ceil().max(0.0) as usize;
        let hi = (((x + h) / self.spacing).floor() as usize).min(g - 1);
        (lo.min(g - 1), hi)
    }
}

/// Trapezoid integral of a closure over `[a, b]` with `n` panels.
/// Used by tests and by the one-off centering-constant quadratures, which
/// integrate against densities that are not defined on the shared grid.
pub fn trapezoid(a: f64, b: f64, n: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    assert!(n >= 1 && b > a);
    let h = (b - a) / n as f64;
    let mut sum = 0.5 * (f(a) + f(b));
    for i in 1..n {
        sum += f(a + i as f64 * h);
    }
    sum * h
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn grid_endpoints_and_spacing() {
        let g = EvalGrid::new(401).unwrap();
        assert_eq!(g.len(), 401);
        assert_eq!(g.points()[0], 0.0);
        assert_eq!(g.points()[400], 1.0);
        assert_abs_diff_eq!(g.spacing(), 1.0 / 400.0, epsilon = 1e-15);
        for w in g.points().windows(2) {
            assert!(w[1] > w[0]);
            assert_abs_diff_eq!(w[1] - w[0], g.spacing(), epsilon = 1e-12);
        }
    }

    #[test]
    fn grid_too_small_rejected() {
        assert!(EvalGrid::new(1).is_err());
        assert!(EvalGrid::new(0).is_err());
    }

    #[test]
    fn integrate_linear_exact() {
        let g = EvalGrid::new(101).unwrap();
        let vals: Vec<f64> = g.points().iter().map(|x| 2.0 * x + 1.0).collect();
        assert_abs_diff_eq!(g.integrate(&vals), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn integrate_matches_quad_weights() {
        let g = EvalGrid::new(51).unwrap();
        let vals: Vec<f64> = g.points().iter().map(|x| (x * 7.0).sin()).collect();
        let direct = g.integrate(&vals);
        let weighted: f64 = (0..g.len()).map(|i| g.quad_weight(i) * vals[i]).sum();
        assert_abs_diff_eq!(direct, weighted, epsilon = 1e-14);
    }

    #[test]
    fn interp_midpoint_is_average() {
        let g = EvalGrid::new(11).unwrap();
        let vals: Vec<f64> = (0..11).map(|i| i as f64 * i as f64).collect();
        let mid = 0.05;
        assert_abs_diff_eq!(g.interp(&vals, mid), 0.5 * (vals[0] + vals[1]), epsilon = 1e-12);
        assert_abs_diff_eq!(g.interp(&vals, 0.3), vals[3], epsilon = 1e-12);
        assert_eq!(g.interp(&vals, 1.0), vals[10]);
    }

    #[test]
    fn band_covers_support() {
        let g = EvalGrid::new(401).unwrap();
        let (lo, hi) = g.band(0.5, 0.1);
        assert_eq!(g.points()[lo], 0.4);
        assert_eq!(g.points()[hi], 0.6);
        let (lo, hi) = g.band(0.01, 0.1);
        assert_eq!(lo, 0);
        assert!(g.points()[hi] <= 0.11 + 1e-12);
    }

    #[test]
    fn freestanding_trapezoid() {
        let v = trapezoid(0.0, 3.0, 3, |x| x * x);
        assert_abs_diff_eq!(v, 9.5, epsilon = 1e-12);
    }
}
