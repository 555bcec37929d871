//! Two-stage transfer of additive structure from auxiliary samples to a
//! target sample.
//!
//! Step 1 fits the penalized model on a weighted pool of populations, each
//! contributing rows with weight proportional to its size and residuals
//! against its own mean. Step 2 re-centers the pooled components so they
//! satisfy the target sample's empirical constraint. Step 3 fits a
//! correction on the target sample alone with the centered pooled fit held
//! fixed as an additive offset. Step 4 adds correction to centered pool and
//! restores the target intercept. When the auxiliary populations resemble
//! the target, the pooled stage contributes its larger effective sample
//! size and the correction stays small; when they do not, the correction
//! absorbs the difference at the target-only rate.

use crate::curve::ComponentCurve;
use crate::design::DesignField;
use crate::error::{Error, Result};
use crate::grid::EvalGrid;
use crate::kernel::Bandwidths;
use crate::sample::Sample;
use crate::sbf::{self, AdditiveFit, FitConfig, FitDiagnostics};

/// A target sample plus labeled auxiliary samples from related populations.
#[derive(Debug, Clone)]
pub struct MultiSampleSet {
    target: Sample,
    auxiliaries: Vec<(String, Sample)>,
}

impl MultiSampleSet {
    pub fn new(target: Sample, auxiliaries: Vec<(String, Sample)>) -> Result<Self> {
        for (label, s) in &auxiliaries {
            if s.d() != target.d() {
                return Err(Error::DimensionMismatch {
                    reason: format!(
                        "auxiliary '{label}' has d={} but the target has d={}",
                        s.d(),
                        target.d()
                    ),
                });
            }
        }
        Ok(Self {
            target,
            auxiliaries,
        })
    }

    pub fn target(&self) -> &Sample {
        &self.target
    }

    pub fn auxiliaries(&self) -> &[(String, Sample)] {
        &self.auxiliaries
    }

    pub fn d(&self) -> usize {
        self.target.d()
    }

    /// Auxiliary pool weights n_a / n_A; sums to one when any auxiliaries
    /// exist.
    pub fn aux_weights(&self) -> Vec<f64> {
        let n_a: usize = self.auxiliaries.iter().map(|(_, s)| s.n()).sum();
        self.auxiliaries
            .iter()
            .map(|(_, s)| s.n() as f64 / n_a as f64)
            .collect()
    }

    /// Pool membership for Step 1, weighted by sample size.
    fn pool_parts(&self, include_target: bool) -> Result<Vec<(f64, &Sample)>> {
        let mut parts: Vec<(f64, &Sample)> = Vec::new();
        if include_target || self.auxiliaries.is_empty() {
            parts.push((self.target.n() as f64, &self.target));
        }
        for (_, s) in &self.auxiliaries {
            parts.push((s.n() as f64, s));
        }
        Ok(parts)
    }
}

/// Settings for the two-stage estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct TLConfig {
    /// Penalty for the pooled stage.
    pub lambda1: f64,
    /// Penalty for the correction stage.
    pub lambda2: f64,
    pub bw_pooled: Bandwidths,
    pub bw_target: Bandwidths,
    /// Whether the target joins the Step-1 pool (it does in the empirical
    /// setting; disable to mimic the auxiliary-only theory setting).
    pub include_target_in_pool: bool,
    pub inner: FitConfig,
}

impl TLConfig {
    pub fn new(lambda1: f64, lambda2: f64, bw_pooled: Bandwidths, bw_target: Bandwidths) -> Self {
        Self {
            lambda1,
            lambda2,
            bw_pooled,
            bw_target,
            include_target_in_pool: true,
            inner: FitConfig::default(),
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        self.inner.validate()?;
        for (name, bw) in [("pooled", &self.bw_pooled), ("target", &self.bw_target)] {
            if bw.len() != d {
                return Err(Error::DimensionMismatch {
                    reason: format!("{name} bandwidths have length {} for d={d}", bw.len()),
                });
            }
        }
        for (name, l) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::InvalidConfig {
                    reason: format!("{name} must be finite and nonnegative, got {l}"),
                });
            }
        }
        Ok(())
    }

    fn stage_cfg(&self, lambda: f64) -> FitConfig {
        FitConfig {
            lambda,
            ..self.inner.clone()
        }
    }
}

/// The three estimators produced by the two-stage procedure.
#[derive(Debug, Clone)]
pub struct TLFit {
    /// Step-1 pooled fit under the pool's own constraint.
    pub pooled: AdditiveFit,
    /// Step-2 pooled components re-centered to the target constraint.
    pub centered_pooled: Vec<ComponentCurve>,
    /// Step-3 correction fitted on the target with the centered pool fixed.
    pub correction: AdditiveFit,
    /// Step-4 estimator: centered pool plus correction, target intercept.
    pub final_fit: AdditiveFit,
}

/// Builds the weighted pooled design for Step 1.
pub fn pooled_design(m: &MultiSampleSet, cfg: &TLConfig) -> Result<DesignField> {
    cfg.validate(m.d())?;
    let grid = EvalGrid::new(cfg.inner.grid_size)?;
    let parts = m.pool_parts(cfg.include_target_in_pool)?;
    DesignField::pooled(&parts, &cfg.bw_pooled, &grid, cfg.inner.kernel)
}

/// Builds the target-only design for Steps 2 and 3.
pub fn target_design(m: &MultiSampleSet, cfg: &TLConfig) -> Result<DesignField> {
    cfg.validate(m.d())?;
    let grid = EvalGrid::new(cfg.inner.grid_size)?;
    DesignField::from_sample(m.target(), &cfg.bw_target, &grid, cfg.inner.kernel)
}

/// Step 1: penalized fit on the weighted pool with penalty `lambda1`.
pub fn pooled_fit(m: &MultiSampleSet, cfg: &TLConfig) -> Result<AdditiveFit> {
    let design = pooled_design(m, cfg)?;
    pooled_fit_with_design(&design, cfg)
}

/// Step 1 on a prebuilt pooled design.
pub fn pooled_fit_with_design(design: &DesignField, cfg: &TLConfig) -> Result<AdditiveFit> {
    sbf::fit_with_design(design, &cfg.stage_cfg(cfg.lambda1), None)
}

/// Step 2: shifts each pooled component so the target-sample constraint
/// holds exactly. The derivative scale is the pooled bandwidth the
/// component was fitted under; derivatives themselves are unchanged.
pub fn center_to_target(pooled: &AdditiveFit, target: &DesignField) -> Result<Vec<ComponentCurve>> {
    if pooled.d() != target.d() || pooled.grid.len() != target.grid().len() {
        return Err(Error::DimensionMismatch {
            reason: "pooled fit and target design disagree on dimensions".into(),
        });
    }
    let mut centered = Vec::with_capacity(pooled.d());
    for (j, c) in pooled.components.iter().enumerate() {
        if c.is_zero() {
            centered.push(c.clone());
            continue;
        }
        let shift = target.pi00_with_scale(j, c, pooled.bandwidths.get(j));
        centered.push(c.shift_value(shift));
    }
    Ok(centered)
}

/// Step 3: target-only penalized fit with the centered pooled components as
/// a fixed additive offset and penalty `lambda2`.
pub fn debias_fit(
    m: &MultiSampleSet,
    centered_offset: &[ComponentCurve],
    cfg: &TLConfig,
) -> Result<AdditiveFit> {
    let design = target_design(m, cfg)?;
    debias_fit_with_design(&design, centered_offset, cfg)
}

/// Step 3 on a prebuilt target design.
pub fn debias_fit_with_design(
    design: &DesignField,
    centered_offset: &[ComponentCurve],
    cfg: &TLConfig,
) -> Result<AdditiveFit> {
    sbf::fit_with_design(design, &cfg.stage_cfg(cfg.lambda2), Some(centered_offset))
}

/// Step 4: centered pool plus correction with the target-sample intercept.
pub fn combine(
    target_mean: f64,
    pooled: AdditiveFit,
    centered_pooled: Vec<ComponentCurve>,
    correction: AdditiveFit,
) -> TLFit {
    let components: Vec<ComponentCurve> = centered_pooled
        .iter()
        .zip(&correction.components)
        .map(|(c, delta)| c.add(delta))
        .collect();
    let final_fit = AdditiveFit {
        intercept: target_mean,
        active_set: sbf::active_set_of(&components),
        components,
        bandwidths: correction.bandwidths.clone(),
        grid: correction.grid.clone(),
        kernel: correction.kernel,
        smoother: correction.smoother,
        diagnostics: FitDiagnostics {
            outer_iters: pooled.diagnostics.outer_iters + correction.diagnostics.outer_iters,
            objective_trace: Vec::new(),
            converged: pooled.diagnostics.converged && correction.diagnostics.converged,
        },
    };
    TLFit {
        pooled,
        centered_pooled,
        correction,
        final_fit,
    }
}

/// Runs Steps 1 through 4.
pub fn tl_fit(m: &MultiSampleSet, cfg: &TLConfig) -> Result<TLFit> {
    let pooled = pooled_fit(m, cfg)?;
    let t_design = target_design(m, cfg)?;
    tl_fit_from_pooled(m, cfg, pooled, &t_design)
}

/// Steps 2 through 4 given an already-fitted Step 1, so a two-dimensional
/// penalty search can reuse one pooled fit per `lambda1`.
pub fn tl_fit_from_pooled(
    m: &MultiSampleSet,
    cfg: &TLConfig,
    pooled: AdditiveFit,
    t_design: &DesignField,
) -> Result<TLFit> {
    let centered = center_to_target(&pooled, t_design)?;
    let correction = debias_fit_with_design(t_design, &centered, cfg)?;
    Ok(combine(m.target().y_mean(), pooled, centered, correction))
}
