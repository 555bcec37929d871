//! Penalized smooth backfitting: cyclic componentwise minimization with a
//! groupwise soft-threshold that zeroes out weak components.
//!
//! Each cycle visits every covariate. The block update for covariate j has
//! two stages: the unpenalized local-linear minimizer given the other
//! components (a 2×2 solve at every grid point, followed by the constraint
//! centering), then multiplication by the shrinkage factor
//! `(1 - lambda/norm)_+` in the design norm. Because the centering is the
//! exact design-orthogonal projection onto the constraint space, the block
//! update is the exact constrained minimizer and the penalized objective is
//! non-increasing along the cycle.
//!
//! An optional fixed additive offset enters every residual; the penalty and
//! the constraint apply to the fitted components only. This is what the
//! transfer debiasing step needs: it fits a correction on top of the frozen
//! pooled fit.

use crate::curve::ComponentCurve;
use crate::design::DesignField;
use crate::error::{Error, Result};
use crate::grid::EvalGrid;
use crate::kernel::{Bandwidths, BaselineKernel};
use crate::sample::Sample;
use serde::{Deserialize, Serialize};

/// Local smoother family used for the componentwise updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum SmootherKind {
    #[default]
    LocalLinear,
    /// Scalar local-constant mode: derivatives forced to zero, local systems
    /// reduced to division by the marginal density. Benchmark use only.
    NadarayaWatson,
}

impl SmootherKind {
    pub fn name(self) -> &'static str {
        match self {
            SmootherKind::LocalLinear => "local-linear",
            SmootherKind::NadarayaWatson => "nadaraya-watson",
        }
    }
}

impl std::str::FromStr for SmootherKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "local-linear" | "ll" => Ok(SmootherKind::LocalLinear),
            "nadaraya-watson" | "nw" => Ok(SmootherKind::NadarayaWatson),
            other => Err(Error::InvalidConfig {
                reason: format!("unknown smoother '{other}' (expected local-linear or nadaraya-watson)"),
            }),
        }
    }
}

/// Engine settings for a single penalized fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Group penalty level; zero disables shrinkage.
    pub lambda: f64,
    pub max_outer_iters: usize,
    /// Convergence threshold on the relative sup-norm change per full cycle.
    pub tol: f64,
    pub grid_size: usize,
    /// Added to local 2×2 diagonals before inversion.
    pub ridge_floor: f64,
    pub kernel: BaselineKernel,
    pub smoother: SmootherKind,
    /// Covariate visit order within a cycle; defaults to 0..d.
    pub update_order: Option<Vec<usize>>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            max_outer_iters: 200,
            tol: 1e-6,
            grid_size: 101,
            ridge_floor: 1e-10,
            kernel: BaselineKernel::Epanechnikov,
            smoother: SmootherKind::LocalLinear,
            update_order: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig {
                reason: format!("lambda must be a finite nonnegative number, got {}", self.lambda),
            });
        }
        if self.max_outer_iters == 0 {
            return Err(Error::InvalidConfig {
                reason: "max_outer_iters must be at least 1".into(),
            });
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig {
                reason: format!("tol must be positive, got {}", self.tol),
            });
        }
        if self.grid_size < 2 {
            return Err(Error::InvalidConfig {
                reason: format!("grid_size must be at least 2, got {}", self.grid_size),
            });
        }
        if !(self.ridge_floor >= 0.0) {
            return Err(Error::InvalidConfig {
                reason: format!("ridge_floor must be nonnegative, got {}", self.ridge_floor),
            });
        }
        Ok(())
    }

    fn order_for(&self, d: usize) -> Result<Vec<usize>> {
        match &self.update_order {
            None => Ok((0..d).collect()),
            Some(order) => {
                let mut seen = vec![false; d];
                if order.len() != d {
                    return Err(Error::InvalidConfig {
                        reason: format!("update_order has {} entries for d={d}", order.len()),
                    });
                }
                for &j in order {
                    if j >= d || seen[j] {
                        return Err(Error::InvalidConfig {
                            reason: format!("update_order is not a permutation of 0..{d}"),
                        });
                    }
                    seen[j] = true;
                }
                Ok(order.clone())
            }
        }
    }
}

/// Iteration record of one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub outer_iters: usize,
    /// Penalized objective after each outer cycle, non-increasing.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

/// Fitted additive model on the evaluation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditiveFit {
    pub intercept: f64,
    pub components: Vec<ComponentCurve>,
    /// Covariates with a nonzero fitted component, ascending.
    pub active_set: Vec<usize>,
    pub bandwidths: Bandwidths,
    pub grid: EvalGrid,
    pub kernel: BaselineKernel,
    pub smoother: SmootherKind,
    pub diagnostics: FitDiagnostics,
}

impl AdditiveFit {
    pub fn d(&self) -> usize {
        self.components.len()
    }

    /// Intercept plus the sum of linearly interpolated components at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d() {
            return Err(Error::DimensionMismatch {
                reason: format!("point has {} coordinates, model has {}", x.len(), self.d()),
            });
        }
        let mut acc = self.intercept;
        for (j, &xj) in x.iter().enumerate() {
            if !(0.0..=1.0).contains(&xj) || !xj.is_finite() {
                return Err(Error::DomainViolation {
                    row: 0,
                    col: j,
                    value: xj,
                });
            }
            if !self.components[j].is_zero() {
                acc += self.components[j].interp_value(&self.grid, xj);
            }
        }
        Ok(acc)
    }

    /// Predictions for column-major points, skipping zero components.
    pub fn predict_columns(&self, columns: &[Vec<f64>]) -> Result<Vec<f64>> {
        if columns.len() != self.d() {
            return Err(Error::DimensionMismatch {
                reason: format!("{} columns for a model with d={}", columns.len(), self.d()),
            });
        }
        let n = columns.first().map_or(0, |c| c.len());
        let mut out = vec![self.intercept; n];
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(Error::DimensionMismatch {
                    reason: format!("column {j} has {} rows, expected {n}", col.len()),
                });
            }
            if self.components[j].is_zero() {
                continue;
            }
            for (i, &xj) in col.iter().enumerate() {
                if !(0.0..=1.0).contains(&xj) || !xj.is_finite() {
                    return Err(Error::DomainViolation {
                        row: i,
                        col: j,
                        value: xj,
                    });
                }
                out[i] += self.components[j].interp_value(&self.grid, xj);
            }
        }
        Ok(out)
    }

    /// Recomputes the active set from the stored components.
    pub fn recompute_active_set(&mut self) {
        self.active_set = active_set_of(&self.components);
    }
}

pub fn active_set_of(components: &[ComponentCurve]) -> Vec<usize> {
    components
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.is_zero())
        .map(|(j, _)| j)
        .collect()
}

/// Fits the penalized additive model to one sample.
pub fn fit(
    s: &Sample,
    bw: &Bandwidths,
    cfg: &FitConfig,
    offset: Option<&[ComponentCurve]>,
) -> Result<AdditiveFit> {
    cfg.validate()?;
    let grid = EvalGrid::new(cfg.grid_size)?;
    let design = DesignField::from_sample(s, bw, &grid, cfg.kernel)?;
    fit_with_design(&design, cfg, offset)
}

/// Fits on a prebuilt design field; the entry point shared by the plain,
/// pooled, and offset (debias) fits and by the lambda-grid search.
pub fn fit_with_design(
    design: &DesignField,
    cfg: &FitConfig,
    offset: Option<&[ComponentCurve]>,
) -> Result<AdditiveFit> {
    cfg.validate()?;
    let d = design.d();
    let g_len = design.grid().len();
    if cfg.grid_size != g_len {
        return Err(Error::InvalidConfig {
            reason: format!(
                "config grid_size {} does not match the design grid {g_len}",
                cfg.grid_size
            ),
        });
    }
    if let Some(off) = offset {
        if off.len() != d {
            return Err(Error::DimensionMismatch {
                reason: format!("{} offset curves for d={d}", off.len()),
            });
        }
        for c in off {
            if c.len() != g_len {
                return Err(Error::DimensionMismatch {
                    reason: format!("offset curve has {} nodes, grid has {g_len}", c.len()),
                });
            }
        }
    }
    let order = cfg.order_for(d)?;
    let n = design.n_rows();

    let mut comps = vec![ComponentCurve::zeros(g_len); d];
    // Per-row smooths of component-plus-offset, their total, and the total
    // of squares, all maintained incrementally so one cycle is O(d n G h).
    let mut s_tot: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut s_all = vec![0.0; n];
    let mut s_sq = vec![0.0; n];
    for j in 0..d {
        let s_j = match offset {
            Some(off) if !off[j].is_zero() => design.smooth_rows(j, &off[j]),
            _ => vec![0.0; n],
        };
        for i in 0..n {
            s_all[i] += s_j[i];
            s_sq[i] += s_j[i] * s_j[i];
        }
        s_tot.push(s_j);
    }

    let mut zero_streak = vec![0usize; d];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut outer_iters = 0;
    let mut force_full = true;
    let mut partial = vec![0.0; n];

    for cycle in 1..=cfg.max_outer_iters {
        outer_iters = cycle;
        let revisit_all = force_full || cycle % 5 == 0;
        force_full = false;
        let mut cycle_was_full = true;
        let mut max_change = 0.0_f64;
        let mut max_value = 0.0_f64;

        for &j in &order {
            if !revisit_all && zero_streak[j] >= 3 {
                cycle_was_full = false;
                continue;
            }
            for i in 0..n {
                partial[i] = s_all[i] - s_tot[j][i];
            }
            let new = update_component(design, cfg, j, offset, &partial)?;

            let mut delta = 0.0_f64;
            for g in 0..g_len {
                delta = delta.max((new.value[g] - comps[j].value[g]).abs());
            }
            max_change = max_change.max(delta);

            let tot_j = match offset {
                Some(off) if !off[j].is_zero() => new.add(&off[j]),
                _ => new.clone(),
            };
            let s_new = if tot_j.is_zero() {
                vec![0.0; n]
            } else {
                design.smooth_rows(j, &tot_j)
            };
            for i in 0..n {
                s_all[i] += s_new[i] - s_tot[j][i];
                s_sq[i] += s_new[i] * s_new[i] - s_tot[j][i] * s_tot[j][i];
            }
            s_tot[j] = s_new;

            if new.is_zero() {
                zero_streak[j] += 1;
            } else {
                zero_streak[j] = 0;
            }
            comps[j] = new;
        }

        for c in &comps {
            max_value = max_value.max(c.sup_value());
        }
        trace.push(objective_value(design, &comps, offset, &s_all, &s_sq, cfg));

        if max_change / (1.0 + max_value) < cfg.tol {
            if cycle_was_full {
                converged = true;
                break;
            }
            // A skipped component might still need one more look; force a
            // full revisit before declaring convergence.
            force_full = true;
        }
    }

    let intercept = design
        .pop_spans()
        .iter()
        .map(|sp| sp.weight * sp.y_mean)
        .sum();
    Ok(AdditiveFit {
        intercept,
        active_set: active_set_of(&comps),
        components: comps,
        bandwidths: design.bandwidths().clone(),
        grid: design.grid().clone(),
        kernel: design.kernel(),
        smoother: cfg.smoother,
        diagnostics: FitDiagnostics {
            outer_iters,
            objective_trace: trace,
            converged,
        },
    })
}

/// One standalone block update for covariate j given the other components.
///
/// Recomputes the cross-component smooths from scratch; the engine itself
/// uses the incremental equivalent. Returns the centered, soft-thresholded
/// component.
pub fn component_update(
    j: usize,
    components: &[ComponentCurve],
    design: &DesignField,
    offset: Option<&[ComponentCurve]>,
    cfg: &FitConfig,
) -> Result<ComponentCurve> {
    cfg.validate()?;
    let n = design.n_rows();
    let mut partial = vec![0.0; n];
    for k in 0..design.d() {
        if k == j {
            continue;
        }
        let tot_k = match offset {
            Some(off) if !off[k].is_zero() => components[k].add(&off[k]),
            _ => components[k].clone(),
        };
        if tot_k.is_zero() {
            continue;
        }
        for (i, s) in design.smooth_rows(k, &tot_k).into_iter().enumerate() {
            partial[i] += s;
        }
    }
    update_component(design, cfg, j, offset, &partial)
}

/// Shared stage-1 solve, offset subtraction, centering, and shrinkage.
/// `partial[i]` holds the summed smooths of all other components plus their
/// offsets.
fn update_component(
    design: &DesignField,
    cfg: &FitConfig,
    j: usize,
    offset: Option<&[ComponentCurve]>,
    partial: &[f64],
) -> Result<ComponentCurve> {
    let g_len = design.grid().len();
    let proj = design.project(j, partial);
    let mnum = design.mnum(j);

    let solved = match cfg.smoother {
        SmootherKind::LocalLinear => {
            let rhs: Vec<[f64; 2]> = (0..g_len)
                .map(|g| [mnum[g][0] - proj[g][0], mnum[g][1] - proj[g][1]])
                .collect();
            design.solve_local(j, &rhs, cfg.ridge_floor)?
        }
        SmootherKind::NadarayaWatson => {
            let rhs: Vec<f64> = (0..g_len).map(|g| mnum[g][0] - proj[g][0]).collect();
            design.solve_local_nw(j, &rhs, cfg.ridge_floor)?
        }
    };
    let unshrunk = match offset {
        Some(off) if !off[j].is_zero() => solved.sub(&off[j]),
        _ => solved,
    };
    let centered = design.center_constraint(j, &unshrunk)?;

    if cfg.lambda == 0.0 {
        return Ok(centered);
    }
    let norm = match cfg.smoother {
        SmootherKind::LocalLinear => design.tuple_norm(j, &centered),
        SmootherKind::NadarayaWatson => design.tuple_norm_nw(j, &centered),
    };
    if norm <= cfg.lambda {
        return Ok(ComponentCurve::zeros(g_len));
    }
    Ok(centered.scale(1.0 - cfg.lambda / norm))
}

/// Penalized objective of a fit's components against a design, with the
/// smoothed squared loss expanded into residual, marginal, quadratic, and
/// cross parts.
pub fn penalized_objective(f: &AdditiveFit, design: &DesignField, cfg: &FitConfig) -> Result<f64> {
    cfg.validate()?;
    if f.d() != design.d() || f.grid.len() != design.grid().len() {
        return Err(Error::DimensionMismatch {
            reason: "fit and design disagree on dimensions".into(),
        });
    }
    let n = design.n_rows();
    let mut s_all = vec![0.0; n];
    let mut s_sq = vec![0.0; n];
    for j in 0..f.d() {
        if f.components[j].is_zero() {
            continue;
        }
        for (i, s) in design.smooth_rows(j, &f.components[j]).into_iter().enumerate() {
            s_all[i] += s;
            s_sq[i] += s * s;
        }
    }
    Ok(objective_value(design, &f.components, None, &s_all, &s_sq, cfg))
}

/// Objective from maintained per-row smooths. The smoothed loss
/// `(1/2)Σ_i ω_i ∫ (R_i - Σ_j tot_j)² Π_k κ_k` expands exactly (the weight
/// columns integrate to one on the grid) into
/// `(1/2)Σ ω R² - Σ ω R S + (1/2)Σ_j ∫ tot M̂ tot + (1/2)Σ ω (S² - Σ_j s²)`;
/// the penalty applies to the components without their offsets.
fn objective_value(
    design: &DesignField,
    comps: &[ComponentCurve],
    offset: Option<&[ComponentCurve]>,
    s_all: &[f64],
    s_sq: &[f64],
    cfg: &FitConfig,
) -> f64 {
    let w = design.row_weight();
    let r = design.resid();
    let mut loss = 0.0;
    for i in 0..design.n_rows() {
        loss += w[i] * (0.5 * r[i] * r[i] - r[i] * s_all[i] + 0.5 * (s_all[i] * s_all[i] - s_sq[i]));
    }
    for (j, c) in comps.iter().enumerate() {
        let tot = match offset {
            Some(off) if !off[j].is_zero() => c.add(&off[j]),
            _ => c.clone(),
        };
        if tot.is_zero() {
            continue;
        }
        let norm = match cfg.smoother {
            SmootherKind::LocalLinear => design.tuple_norm(j, &tot),
            SmootherKind::NadarayaWatson => design.tuple_norm_nw(j, &tot),
        };
        loss += 0.5 * norm * norm;
    }
    if cfg.lambda > 0.0 {
        for (j, c) in comps.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let norm = match cfg.smoother {
                SmootherKind::LocalLinear => design.tuple_norm(j, c),
                SmootherKind::NadarayaWatson => design.tuple_norm_nw(j, c),
            };
            loss += cfg.lambda * norm;
        }
    }
    loss
}
