//! Empirical local-linear design objects for one population or a weighted
//! pool of populations.
//!
//! For covariate j and grid point x the field stores
//! `M̂_jj(x) = Σ_i ω_i z z^T K_{h_j}(x, X_j^i)` with `z = (1, (X_j^i - x)/h_j)`
//! and the marginal numerator `m̂_j(x) = Σ_i ω_i z R_i K_{h_j}(x, X_j^i)`,
//! where `R_i` is the response minus its own population's mean and `ω_i` are
//! row weights summing to one. A single sample is the special case
//! `ω_i = 1/n`; a pooled design concatenates populations with
//! `ω_i = w_a / n_a` for rows of population a. The first column of `M̂_jj`
//! is the marginal density tuple `p̂_j^v`, an identity of the summands that
//! the centering projection relies on.
//!
//! Cross-covariate terms never materialize the G×G matrix `M̂_jk`; instead
//! each observation is reduced to the scalar
//! `s_i = ∫ (g(x) + (X_k^i - x) g'(x)) K_{h_k}(x, X_k^i) dx`
//! and scattered back through covariate j's weights, which is O(n·G) per
//! pair instead of O(G²) memory.

use crate::curve::ComponentCurve;
use crate::error::{Error, Result};
use crate::grid::EvalGrid;
use crate::kernel::{weight_field, Bandwidths, BaselineKernel, WeightBand, WeightField};
use crate::sample::Sample;
use rayon::prelude::*;

/// Eigenvalue threshold below which a local 2×2 system counts as degenerate.
const ILL_CONDITIONED_EIG: f64 = 1e-8;
/// Number of observations supporting a grid point from which degeneracy is
/// reported instead of ridged over. A degenerate system backed by this many
/// rows means the covariate is effectively discrete there; with fewer rows
/// (thin boundary regions under vanishing densities) the system is rank
/// deficient but consistent, and the ridge recovers the minimum-norm
/// minimizer, which is exact for the backfitting objective.
const ILL_CONDITIONED_MIN_SUPPORT: u32 = 50;

/// Contiguous block of pooled rows belonging to one population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopSpan {
    pub start: usize,
    pub len: usize,
    pub weight: f64,
    pub y_mean: f64,
}

/// Precomputed smoothing weights and local-linear moments for every
/// covariate, on a shared grid. Immutable once built.
#[derive(Debug, Clone)]
pub struct DesignField {
    grid: EvalGrid,
    bw: Bandwidths,
    kernel: BaselineKernel,
    x: Vec<Vec<f64>>,
    row_weight: Vec<f64>,
    resid: Vec<f64>,
    pop_spans: Vec<PopSpan>,
    weights: Vec<WeightField>,
    mjj: Vec<Vec<[f64; 3]>>,
    mnum: Vec<Vec<[f64; 2]>>,
    support: Vec<Vec<u32>>,
}

impl DesignField {
    /// Single-sample design with uniform row weights 1/n.
    pub fn from_sample(
        s: &Sample,
        bw: &Bandwidths,
        grid: &EvalGrid,
        kernel: BaselineKernel,
    ) -> Result<Self> {
        Self::pooled(&[(1.0, s)], bw, grid, kernel)
    }

    /// Weighted multi-population design. Weights must be positive; they are
    /// normalized to sum to one. Rows of population a carry weight w_a/n_a
    /// and residuals Y_i - Ȳ_a.
    pub fn pooled(
        parts: &[(f64, &Sample)],
        bw: &Bandwidths,
        grid: &EvalGrid,
        kernel: BaselineKernel,
    ) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidConfig {
                reason: "pooled design needs at least one sample".into(),
            });
        }
        let d = parts[0].1.d();
        if bw.len() != d {
            return Err(Error::DimensionMismatch {
                reason: format!("{} bandwidths for {d} covariates", bw.len()),
            });
        }
        let mut total_w = 0.0;
        for &(w, s) in parts {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidConfig {
                    reason: format!("non-positive pool weight {w}"),
                });
            }
            if s.d() != d {
                return Err(Error::DimensionMismatch {
                    reason: format!("pooled samples disagree on d: {} vs {d}", s.d()),
                });
            }
            total_w += w;
        }

        let n_total: usize = parts.iter().map(|&(_, s)| s.n()).sum();
        let mut x: Vec<Vec<f64>> = vec![Vec::with_capacity(n_total); d];
        let mut row_weight = Vec::with_capacity(n_total);
        let mut resid = Vec::with_capacity(n_total);
        let mut pop_spans = Vec::with_capacity(parts.len());
        let mut start = 0;
        for &(w, s) in parts {
            let w = w / total_w;
            let ybar = s.y_mean();
            for j in 0..d {
                x[j].extend_from_slice(s.column(j));
            }
            let per_row = w / s.n() as f64;
            row_weight.extend(std::iter::repeat(per_row).take(s.n()));
            resid.extend(s.y().iter().map(|&yi| yi - ybar));
            pop_spans.push(PopSpan {
                start,
                len: s.n(),
                weight: w,
                y_mean: ybar,
            });
            start += s.n();
        }

        let built: Result<Vec<_>> = (0..d)
            .into_par_iter()
            .map(|j| {
                let wf = weight_field(&x[j], grid, bw.get(j), kernel)?;
                let (mjj, mnum, sup) =
                    accumulate_moments(&wf, &x[j], grid, bw.get(j), &row_weight, &resid);
                Ok((wf, mjj, mnum, sup))
            })
            .collect();
        let mut weights = Vec::with_capacity(d);
        let mut mjj = Vec::with_capacity(d);
        let mut mnum = Vec::with_capacity(d);
        let mut support = Vec::with_capacity(d);
        for (wf, m, v, sup) in built? {
            weights.push(wf);
            mjj.push(m);
            mnum.push(v);
            support.push(sup);
        }

        Ok(Self {
            grid: grid.clone(),
            bw: bw.clone(),
            kernel,
            x,
            row_weight,
            resid,
            pop_spans,
            weights,
            mjj,
            mnum,
            support,
        })
    }

    pub fn grid(&self) -> &EvalGrid {
        &self.grid
    }

    pub fn bandwidths(&self) -> &Bandwidths {
        &self.bw
    }

    pub fn kernel(&self) -> BaselineKernel {
        self.kernel
    }

    pub fn d(&self) -> usize {
        self.x.len()
    }

    pub fn n_rows(&self) -> usize {
        self.resid.len()
    }

    pub fn row_weight(&self) -> &[f64] {
        &self.row_weight
    }

    /// Per-row responses minus their own population mean.
    pub fn resid(&self) -> &[f64] {
        &self.resid
    }

    pub fn pop_spans(&self) -> &[PopSpan] {
        &self.pop_spans
    }

    pub fn covariate(&self, j: usize) -> &[f64] {
        &self.x[j]
    }

    /// Symmetric M̂_jj over the grid as [M00, M01, M11] triples.
    pub fn mjj(&self, j: usize) -> &[[f64; 3]] {
        &self.mjj[j]
    }

    /// Marginal numerator field Σ ω z R κ over the grid.
    pub fn mnum(&self, j: usize) -> &[[f64; 2]] {
        &self.mnum[j]
    }

    /// Marginal density tuple p̂_j^v(x), the first column of M̂_jj.
    pub fn pj(&self, j: usize, g: usize) -> [f64; 2] {
        let m = self.mjj[j][g];
        [m[0], m[1]]
    }

    pub fn weight_band(&self, j: usize, i: usize) -> &WeightBand {
        self.weights[j].band(i)
    }

    /// Per-row smooths of a component curve against covariate k's weights:
    /// `s_i = ∫ (g(x) + (X_k^i - x) g'(x)) K_{h_k}(x, X_k^i) dx`.
    pub fn smooth_rows(&self, k: usize, curve: &ComponentCurve) -> Vec<f64> {
        let wf = &self.weights[k];
        let pts = self.grid.points();
        let xk = &self.x[k];
        (0..self.n_rows())
            .map(|i| {
                let band = wf.band(i);
                let mut acc = 0.0;
                for (off, &kap) in band.values.iter().enumerate() {
                    let g = band.start + off;
                    let lin = curve.value[g] + (xk[i] - pts[g]) * curve.deriv[g];
                    acc += self.grid.quad_weight(g) * lin * kap;
                }
                acc
            })
            .collect()
    }

    /// Scatters per-row scalars through covariate j's local-linear basis:
    /// `out(x) = Σ_i ω_i s_i z K_{h_j}(x, X_j^i)`.
    pub fn project(&self, j: usize, scalars: &[f64]) -> Vec<[f64; 2]> {
        debug_assert_eq!(scalars.len(), self.n_rows());
        let wf = &self.weights[j];
        let pts = self.grid.points();
        let xj = &self.x[j];
        let h = self.bw.get(j);
        let mut out = vec![[0.0; 2]; self.grid.len()];
        for i in 0..self.n_rows() {
            let ws = self.row_weight[i] * scalars[i];
            if ws == 0.0 {
                continue;
            }
            let band = wf.band(i);
            for (off, &kap) in band.values.iter().enumerate() {
                let g = band.start + off;
                let z1 = (xj[i] - pts[g]) / h;
                out[g][0] += ws * kap;
                out[g][1] += ws * kap * z1;
            }
        }
        out
    }

    /// Smoothed cross-covariate field
    /// `x ↦ ∫ M̂_jk(x, u) (g(u), h_k g'(u)) du`
    /// via the per-row scalar reduction.
    pub fn cross_term(&self, j: usize, k: usize, other: &ComponentCurve) -> Result<Vec<[f64; 2]>> {
        if other.len() != self.grid.len() {
            return Err(Error::DimensionMismatch {
                reason: format!(
                    "curve has {} nodes but the grid has {}",
                    other.len(),
                    self.grid.len()
                ),
            });
        }
        Ok(self.project(j, &self.smooth_rows(k, other)))
    }

    /// One entry of the cross matrix
    /// `M̂_jk(x_gj, x_gk) = Σ_i ω_i z_j z_k^T κ_j κ_k` (tests only; O(n) each).
    pub fn mjk(&self, j: usize, k: usize, gj: usize, gk: usize) -> [[f64; 2]; 2] {
        let pts = self.grid.points();
        let (hj, hk) = (self.bw.get(j), self.bw.get(k));
        let mut out = [[0.0; 2]; 2];
        for i in 0..self.n_rows() {
            let bj = self.weights[j].band(i);
            let bk = self.weights[k].band(i);
            if gj < bj.start || gj >= bj.end() || gk < bk.start || gk >= bk.end() {
                continue;
            }
            let kj = bj.values[gj - bj.start];
            let kk = bk.values[gk - bk.start];
            let zj = (self.x[j][i] - pts[gj]) / hj;
            let zk = (self.x[k][i] - pts[gk]) / hk;
            let w = self.row_weight[i] * kj * kk;
            out[0][0] += w;
            out[0][1] += w * zk;
            out[1][0] += w * zj;
            out[1][1] += w * zj * zk;
        }
        out
    }

    /// Solves `M̂_jj(x) θ(x) = rhs(x)` at every grid point with the ridge
    /// floor on the diagonal, returning the curve with the derivative
    /// unscaled (second coordinate divided by h_j).
    pub fn solve_local(&self, j: usize, rhs: &[[f64; 2]], ridge: f64) -> Result<ComponentCurve> {
        let h = self.bw.get(j);
        let mut value = Vec::with_capacity(self.grid.len());
        let mut deriv = Vec::with_capacity(self.grid.len());
        for (g, m) in self.mjj[j].iter().enumerate() {
            let (a, b, c) = (m[0], m[1], m[2]);
            let min_eig = 0.5 * ((a + c) - ((a - c).powi(2) + 4.0 * b * b).sqrt());
            if self.support[j][g] >= ILL_CONDITIONED_MIN_SUPPORT && min_eig < ILL_CONDITIONED_EIG {
                return Err(Error::IllConditioned {
                    covariate: j,
                    grid_point: self.grid.points()[g],
                    min_eigenvalue: min_eig,
                });
            }
            let (ar, cr) = (a + ridge, c + ridge);
            let det = ar * cr - b * b;
            let [r0, r1] = rhs[g];
            value.push((cr * r0 - b * r1) / det);
            deriv.push((ar * r1 - b * r0) / det / h);
        }
        Ok(ComponentCurve { value, deriv })
    }

    /// Scalar (Nadaraya-Watson) counterpart of [`solve_local`]: divides by
    /// M̂_jj[0][0] and leaves the derivative identically zero.
    pub fn solve_local_nw(&self, j: usize, rhs0: &[f64], ridge: f64) -> Result<ComponentCurve> {
        let mut value = Vec::with_capacity(self.grid.len());
        for (g, m) in self.mjj[j].iter().enumerate() {
            let a = m[0];
            if self.support[j][g] >= ILL_CONDITIONED_MIN_SUPPORT && a < ILL_CONDITIONED_EIG {
                return Err(Error::IllConditioned {
                    covariate: j,
                    grid_point: self.grid.points()[g],
                    min_eigenvalue: a,
                });
            }
            value.push(rhs0[g] / (a + ridge));
        }
        Ok(ComponentCurve {
            deriv: vec![0.0; value.len()],
            value,
        })
    }

    /// Marginal local-linear pilot `m̂_j^v = M̂_jj^{-1} · m̂_j`.
    pub fn marginal_ll(&self, j: usize, ridge: f64) -> Result<ComponentCurve> {
        self.solve_local(j, &self.mnum[j], ridge)
    }

    /// Design norm `sqrt(∫ (g, h_j g')^T M̂_jj (g, h_j g') dx)`.
    pub fn tuple_norm(&self, j: usize, curve: &ComponentCurve) -> f64 {
        let h = self.bw.get(j);
        let sq = self
            .mjj[j]
            .iter()
            .enumerate()
            .map(|(g, m)| {
                let v = curve.value[g];
                let dv = h * curve.deriv[g];
                self.grid.quad_weight(g) * (m[0] * v * v + 2.0 * m[1] * v * dv + m[2] * dv * dv)
            })
            .sum::<f64>();
        sq.max(0.0).sqrt()
    }

    /// Scalar-mode norm `sqrt(∫ g² M̂_jj[0][0] dx)`.
    pub fn tuple_norm_nw(&self, j: usize, curve: &ComponentCurve) -> f64 {
        let sq = self
            .mjj[j]
            .iter()
            .enumerate()
            .map(|(g, m)| self.grid.quad_weight(g) * m[0] * curve.value[g] * curve.value[g])
            .sum::<f64>();
        sq.max(0.0).sqrt()
    }

    /// Constraint functional `∫ (g, h_j g')^T p̂_j^v dx`.
    pub fn pi00_constant(&self, j: usize, curve: &ComponentCurve) -> f64 {
        self.pi00_with_scale(j, curve, self.bw.get(j))
    }

    /// Constraint functional with an explicit derivative scale, for curves
    /// fitted under bandwidths other than this design's.
    pub fn pi00_with_scale(&self, j: usize, curve: &ComponentCurve, h_scale: f64) -> f64 {
        self.mjj[j]
            .iter()
            .enumerate()
            .map(|(g, m)| {
                self.grid.quad_weight(g) * (m[0] * curve.value[g] + m[1] * h_scale * curve.deriv[g])
            })
            .sum()
    }

    /// Subtracts the constant that makes `∫ (g, h_j g')^T p̂_j^v dx = 0`
    /// hold exactly; the derivative is untouched.
    pub fn center_constraint(&self, j: usize, curve: &ComponentCurve) -> Result<ComponentCurve> {
        let mass: f64 = self
            .mjj[j]
            .iter()
            .enumerate()
            .map(|(g, m)| self.grid.quad_weight(g) * m[0])
            .sum();
        if mass <= 0.0 {
            return Err(Error::DegenerateMarginal { covariate: j });
        }
        let c = self.pi00_constant(j, curve) / mass;
        Ok(curve.shift_value(c))
    }
}

fn accumulate_moments(
    wf: &WeightField,
    xj: &[f64],
    grid: &EvalGrid,
    h: f64,
    row_weight: &[f64],
    resid: &[f64],
) -> (Vec<[f64; 3]>, Vec<[f64; 2]>, Vec<u32>) {
    let pts = grid.points();
    let mut mjj = vec![[0.0; 3]; grid.len()];
    let mut mnum = vec![[0.0; 2]; grid.len()];
    let mut support = vec![0u32; grid.len()];
    for i in 0..xj.len() {
        let band = wf.band(i);
        let w = row_weight[i];
        let r = resid[i];
        for (off, &kap) in band.values.iter().enumerate() {
            let g = band.start + off;
            if kap > 0.0 {
                support[g] += 1;
            }
            let z1 = (xj[i] - pts[g]) / h;
            let wk = w * kap;
            mjj[g][0] += wk;
            mjj[g][1] += wk * z1;
            mjj[g][2] += wk * z1 * z1;
            mnum[g][0] += wk * r;
            mnum[g][1] += wk * z1 * r;
        }
    }
    (mjj, mnum, support)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> EvalGrid {
        EvalGrid::new(101).unwrap()
    }

    fn random_sample(n: usize, d: usize, seed: u64) -> Sample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let columns: Vec<Vec<f64>> = (0..d)
            .map(|_| (0..n).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let y = (0..n).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
        Sample::new(columns, y).unwrap()
    }

    fn design(s: &Sample, h: f64) -> DesignField {
        let bw = Bandwidths::uniform(h, s.d()).unwrap();
        DesignField::from_sample(s, &bw, &grid(), BaselineKernel::Epanechnikov).unwrap()
    }

    #[test]
    fn density_tuple_is_first_column() {
        let s = random_sample(40, 2, 7);
        let de = design(&s, 0.15);
        for j in 0..2 {
            for g in 0..de.grid().len() {
                let m = de.mjj(j)[g];
                let p = de.pj(j, g);
                assert_eq!(m[0], p[0]);
                assert_eq!(m[1], p[1]);
                let min_eig =
                    0.5 * ((m[0] + m[2]) - ((m[0] - m[2]).powi(2) + 4.0 * m[1] * m[1]).sqrt());
                assert!(min_eig >= -1e-12, "M must be psd, got eig {min_eig}");
            }
        }
    }

    #[test]
    fn density_mass_is_one() {
        // Each weight column integrates to one and row weights sum to one,
        // so the marginal density tuple's first entry integrates to one to
        // float precision.
        let s = random_sample(60, 3, 8);
        let de = design(&s, 0.1);
        for j in 0..3 {
            let mass: f64 = de
                .mjj(j)
                .iter()
                .enumerate()
                .map(|(g, m)| de.grid().quad_weight(g) * m[0])
                .sum();
            assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn duplicate_rows_at_a_point_make_rank_one_local_matrix() {
        let s = Sample::new(vec![vec![0.5, 0.5]], vec![0.0, 0.0]).unwrap();
        let de = design(&s, 0.1);
        let g_mid = 50;
        assert_eq!(de.grid().points()[g_mid], 0.5);
        let m = de.mjj(0)[g_mid];
        assert_abs_diff_eq!(m[1], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m[2], 0.0, epsilon = 1e-14);
        assert!(m[0] > 0.0);
    }

    #[test]
    fn constant_response_gives_zero_marginal() {
        let mut s = random_sample(30, 2, 9);
        s = Sample::new(s.columns().to_vec(), vec![3.5; 30]).unwrap();
        let de = design(&s, 0.2);
        let m = de.marginal_ll(0, 1e-10).unwrap();
        assert!(m.sup_value() <= 1e-12);
    }

    #[test]
    fn centering_is_exact_and_idempotent() {
        let s = random_sample(35, 2, 10);
        let de = design(&s, 0.12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let curve = ComponentCurve {
            value: (0..101).map(|_| rng.gen::<f64>() - 0.3).collect(),
            deriv: (0..101).map(|_| rng.gen::<f64>() * 2.0).collect(),
        };
        let centered = de.center_constraint(0, &curve).unwrap();
        assert!(de.pi00_constant(0, &centered).abs() <= 1e-12);
        let twice = de.center_constraint(0, &centered).unwrap();
        for g in 0..101 {
            assert_abs_diff_eq!(twice.value[g], centered.value[g], epsilon = 1e-12);
        }
        assert_eq!(centered.deriv, curve.deriv);
    }

    #[test]
    fn unit_curve_centers_to_zero() {
        let s = random_sample(35, 1, 11);
        let de = design(&s, 0.12);
        let curve = ComponentCurve {
            value: vec![1.0; 101],
            deriv: vec![0.0; 101],
        };
        let centered = de.center_constraint(0, &curve).unwrap();
        assert!(centered.sup_value() <= 1e-12);
    }

    #[test]
    fn tuple_norm_basics() {
        let s = random_sample(35, 1, 12);
        let de = design(&s, 0.12);
        assert_eq!(de.tuple_norm(0, &ComponentCurve::zeros(101)), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let curve = ComponentCurve {
            value: (0..101).map(|_| rng.gen::<f64>()).collect(),
            deriv: (0..101).map(|_| rng.gen::<f64>()).collect(),
        };
        let n1 = de.tuple_norm(0, &curve);
        let n3 = de.tuple_norm(0, &curve.scale(-3.0));
        assert_abs_diff_eq!(n3, 3.0 * n1, epsilon = 1e-10);
        // Unit constant curve has norm sqrt of the density mass, which is 1.
        let unit = ComponentCurve {
            value: vec![1.0; 101],
            deriv: vec![0.0; 101],
        };
        assert_abs_diff_eq!(de.tuple_norm(0, &unit), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn tuple_norm_triangle_inequality() {
        let s = random_sample(25, 1, 13);
        let de = design(&s, 0.15);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = ComponentCurve {
                value: (0..101).map(|_| rng.gen::<f64>() - 0.5).collect(),
                deriv: (0..101).map(|_| rng.gen::<f64>() - 0.5).collect(),
            };
            let b = ComponentCurve {
                value: (0..101).map(|_| rng.gen::<f64>() - 0.5).collect(),
                deriv: (0..101).map(|_| rng.gen::<f64>() - 0.5).collect(),
            };
            let lhs = de.tuple_norm(0, &a.add(&b));
            let rhs = de.tuple_norm(0, &a) + de.tuple_norm(0, &b);
            assert!(lhs <= rhs + 1e-10, "triangle inequality violated: {lhs} > {rhs}");
        }
    }

    #[test]
    fn cross_term_of_zero_curve_is_zero() {
        let s = random_sample(20, 2, 14);
        let de = design(&s, 0.2);
        let field = de.cross_term(0, 1, &ComponentCurve::zeros(101)).unwrap();
        for f in field {
            assert_eq!(f, [0.0, 0.0]);
        }
    }

    #[test]
    fn smooth_rows_of_constant_curve_is_constant() {
        // Kernel columns integrate to exactly one, so smoothing the constant
        // curve c returns c at every row.
        let s = random_sample(30, 2, 15);
        let de = design(&s, 0.1);
        let curve = ComponentCurve {
            value: vec![2.5; 101],
            deriv: vec![0.0; 101],
        };
        for &si in &de.smooth_rows(1, &curve) {
            assert_abs_diff_eq!(si, 2.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn ill_conditioned_reported_for_large_samples() {
        let n = 60;
        let s = Sample::new(vec![vec![0.5; n]], (0..n).map(|i| i as f64).collect()).unwrap();
        let bw = Bandwidths::uniform(0.05, 1).unwrap();
        let de = DesignField::from_sample(&s, &bw, &grid(), BaselineKernel::Epanechnikov).unwrap();
        let err = de.marginal_ll(0, 1e-10).unwrap_err();
        match err {
            Error::IllConditioned { covariate, .. } => assert_eq!(covariate, 0),
            other => panic!("expected ill-conditioned, got {other:?}"),
        }
    }

    #[test]
    fn thin_boundary_regions_are_ridged_not_rejected() {
        // 80 rows clustered in the middle leave the boundary grid points
        // with zero or near-zero support; the solve must stay finite there
        // instead of reporting ill-conditioning.
        let n = 80;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let x: Vec<f64> = (0..n).map(|_| 0.4 + 0.2 * rng.gen::<f64>()).collect();
        let y: Vec<f64> = x.iter().map(|&v| v + 0.1 * rng.gen::<f64>()).collect();
        let s = Sample::new(vec![x], y).unwrap();
        let bw = Bandwidths::uniform(0.05, 1).unwrap();
        let de = DesignField::from_sample(&s, &bw, &grid(), BaselineKernel::Epanechnikov).unwrap();
        let curve = de.marginal_ll(0, 1e-10).unwrap();
        assert!(curve.value.iter().all(|v| v.is_finite()));
        assert_abs_diff_eq!(curve.value[0], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(curve.value[100], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn pooled_weights_normalize_and_split_rows() {
        let a = random_sample(10, 1, 16);
        let b = random_sample(30, 1, 17);
        let bw = Bandwidths::uniform(0.2, 1).unwrap();
        let de =
            DesignField::pooled(&[(1.0, &a), (3.0, &b)], &bw, &grid(), BaselineKernel::Epanechnikov)
                .unwrap();
        let spans = de.pop_spans();
        assert_eq!(spans.len(), 2);
        assert_abs_diff_eq!(spans[0].weight, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(spans[1].weight, 0.75, epsilon = 1e-15);
        assert_eq!(spans[1].start, 10);
        let total: f64 = de.row_weight().iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(de.row_weight()[0], 0.25 / 10.0, epsilon = 1e-15);
    }

    #[test]
    fn pooled_of_single_sample_matches_plain() {
        let s = random_sample(25, 2, 18);
        let bw = Bandwidths::uniform(0.15, 2).unwrap();
        let g = grid();
        let plain = DesignField::from_sample(&s, &bw, &g, BaselineKernel::Epanechnikov).unwrap();
        let pooled =
            DesignField::pooled(&[(7.0, &s)], &bw, &g, BaselineKernel::Epanechnikov).unwrap();
        for j in 0..2 {
            assert_eq!(plain.mjj(j), pooled.mjj(j));
            assert_eq!(plain.mnum(j), pooled.mnum(j));
        }
        assert_eq!(plain.row_weight(), pooled.row_weight());
    }
}
