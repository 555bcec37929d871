//! Rule-of-thumb bandwidths and BIC penalty selection.
//!
//! Bandwidths follow the normal-reference rule h_j = 2.34 σ̂_j n^{-1/5}
//! clipped to [0.01, 0.5]. The information criterion is
//! `log((1/2n) Σ (Y - f̂(X))²) + Σ_{j active} log(n h_j)/(n h_j)`,
//! with raw prediction residuals and the penalty summed over the active set
//! only. Penalty levels are chosen by scanning a log-spaced grid; for the
//! two-stage estimator the scan runs over a (lambda1, lambda2) product grid
//! with the pooled stage cached per lambda1. Ties always go to the larger
//! penalty so the sparser model wins.

use crate::design::DesignField;
use crate::error::{Error, Result};
use crate::grid::EvalGrid;
use crate::kernel::Bandwidths;
use crate::sample::Sample;
use crate::sbf::{self, AdditiveFit, FitConfig};
use crate::transfer::{self, MultiSampleSet, TLConfig, TLFit};
use rayon::prelude::*;

/// Normal-reference constant for the Epanechnikov kernel.
pub const ROT_CONSTANT: f64 = 2.34;
/// Clipping range keeping bandwidths usable on the unit interval.
pub const ROT_MIN: f64 = 0.01;
pub const ROT_MAX: f64 = 0.5;

/// Rule-of-thumb bandwidths h_j = 2.34 σ̂_j n^{-1/5}, clipped to
/// [0.01, 0.5]. Constant covariates fall to the lower clip and produce a
/// warning entry instead of an error.
pub fn rot_bandwidth(s: &Sample) -> Result<(Bandwidths, Vec<String>)> {
    if s.n() < 10 {
        return Err(Error::SampleTooSmall {
            need: 10,
            got: s.n(),
        });
    }
    let cols: Vec<&[f64]> = (0..s.d()).map(|j| s.column(j)).collect();
    rot_bandwidth_for_rate(&cols, s.n() as f64)
}

/// Rule-of-thumb bandwidths with an explicit rate sample size, for
/// procedures whose bandwidth shrinks with a pooled or notional n rather
/// than the rows the spread is estimated from.
pub fn rot_bandwidth_for_rate(columns: &[&[f64]], n_rate: f64) -> Result<(Bandwidths, Vec<String>)> {
    if !(n_rate >= 1.0) {
        return Err(Error::InvalidConfig {
            reason: format!("rate sample size must be at least 1, got {n_rate}"),
        });
    }
    let rate = n_rate.powf(-0.2);
    let mut hs = Vec::with_capacity(columns.len());
    let mut warnings = Vec::new();
    for (j, col) in columns.iter().enumerate() {
        let sd = sample_sd(col);
        if sd == 0.0 {
            warnings.push(format!(
                "covariate {j} is constant; using the floor bandwidth {ROT_MIN}"
            ));
            hs.push(ROT_MIN);
            continue;
        }
        hs.push((ROT_CONSTANT * sd * rate).clamp(ROT_MIN, ROT_MAX));
    }
    Ok((Bandwidths::new(hs)?, warnings))
}

pub fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (n - 1.0)).sqrt()
}

/// BIC for a fit on its own sample: log mean half squared prediction
/// residual plus log(n h_j)/(n h_j) over active covariates. Returns negative
/// infinity (degenerate perfect fit) when the residual sum is zero.
pub fn bic_score(s: &Sample, f: &AdditiveFit) -> Result<f64> {
    let preds = f.predict_columns(s.columns())?;
    let rss: f64 = s
        .y()
        .iter()
        .zip(&preds)
        .map(|(&yi, &pi)| (yi - pi).powi(2))
        .sum();
    if rss == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let n = s.n() as f64;
    Ok((rss / (2.0 * n)).ln() + active_penalty(&f.active_set, &f.bandwidths, n))
}

fn active_penalty(active: &[usize], bw: &Bandwidths, n: f64) -> f64 {
    active
        .iter()
        .map(|&j| {
            let nh = n * bw.get(j);
            nh.ln() / nh
        })
        .sum()
}

/// Strictly increasing penalty levels to scan.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid {
    values: Vec<f64>,
}

impl LambdaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidConfig {
                reason: "lambda grid is empty".into(),
            });
        }
        for w in values.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidConfig {
                    reason: "lambda grid must be strictly increasing".into(),
                });
            }
        }
        if !(values[0] > 0.0 && values.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidConfig {
                reason: "lambda grid values must be positive and finite".into(),
            });
        }
        Ok(Self { values })
    }

    /// `count` log-spaced values spanning [1e-3, 1] times the response
    /// standard deviation.
    pub fn log_spaced_for_response(y: &[f64], count: usize) -> Result<Self> {
        let scale = sample_sd(y);
        if scale == 0.0 {
            return Err(Error::ZeroVarianceResponse);
        }
        if count == 0 {
            return Err(Error::InvalidConfig {
                reason: "lambda grid needs at least one point".into(),
            });
        }
        if count == 1 {
            return Self::new(vec![scale]);
        }
        let (lo, hi) = ((1e-3 * scale).ln(), scale.ln());
        let values = (0..count)
            .map(|i| (lo + (hi - lo) * i as f64 / (count - 1) as f64).exp())
            .collect();
        Self::new(values)
    }

    /// Default 20-point grid for single-penalty selection.
    pub fn default_for_response(y: &[f64]) -> Result<Self> {
        Self::log_spaced_for_response(y, 20)
    }

    /// Default 10-point grid for each axis of the pair search.
    pub fn default_pair_axis(y: &[f64]) -> Result<Self> {
        Self::log_spaced_for_response(y, 10)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Outcome of a single-penalty scan.
#[derive(Debug, Clone)]
pub struct LambdaSelection {
    pub lambda: f64,
    pub fit: AdditiveFit,
    /// One (lambda, score) pair per grid point; failed fits carry None.
    pub scores: Vec<(f64, Option<f64>)>,
    pub warnings: Vec<String>,
}

/// Fits every penalty level on one shared design and returns the BIC
/// minimizer, ties going to the larger penalty. Failed levels are skipped
/// with a warning; if every level fails the scan fails.
pub fn select_lambda(
    s: &Sample,
    bw: &Bandwidths,
    grid: &LambdaGrid,
    cfg: &FitConfig,
) -> Result<LambdaSelection> {
    cfg.validate()?;
    let eval_grid = EvalGrid::new(cfg.grid_size)?;
    let design = DesignField::from_sample(s, bw, &eval_grid, cfg.kernel)?;

    let fits: Vec<(f64, Result<(AdditiveFit, f64)>)> = grid
        .values()
        .par_iter()
        .map(|&lambda| {
            let stage = FitConfig {
                lambda,
                ..cfg.clone()
            };
            let outcome = sbf::fit_with_design(&design, &stage, None)
                .and_then(|f| bic_score(s, &f).map(|score| (f, score)));
            (lambda, outcome)
        })
        .collect();

    let mut warnings = Vec::new();
    let mut scores = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, f64, AdditiveFit)> = None;
    for (lambda, outcome) in fits {
        match outcome {
            Ok((f, score)) => {
                scores.push((lambda, Some(score)));
                let better = match &best {
                    None => true,
                    Some((_, best_score, _)) => score <= *best_score,
                };
                if better {
                    best = Some((lambda, score, f));
                }
            }
            Err(e) => {
                warnings.push(format!("lambda {lambda:.6e} failed: {e}"));
                scores.push((lambda, None));
            }
        }
    }
    match best {
        Some((lambda, _, fit)) => Ok(LambdaSelection {
            lambda,
            fit,
            scores,
            warnings,
        }),
        None => Err(Error::SelectionFailed),
    }
}

/// Outcome of the two-dimensional penalty scan.
#[derive(Debug, Clone)]
pub struct PairSelection {
    pub lambda1: f64,
    pub lambda2: f64,
    pub fit: TLFit,
    /// One (lambda1, lambda2, score) triple per evaluated pair.
    pub scores: Vec<(f64, f64, Option<f64>)>,
    pub warnings: Vec<String>,
}

/// Scans the (lambda1, lambda2) product grid for the two-stage estimator.
/// The pooled stage is fitted once per lambda1 and shared across the
/// lambda2 axis. The score is the target-sample BIC of the final estimator;
/// ties go to the larger pair in (lambda1, lambda2) lexicographic order.
pub fn select_lambda_pair(
    m: &MultiSampleSet,
    template: &TLConfig,
    grid1: &LambdaGrid,
    grid2: &LambdaGrid,
) -> Result<PairSelection> {
    template.validate(m.d())?;
    let pooled_design = transfer::pooled_design(m, template)?;
    let t_design = transfer::target_design(m, template)?;

    let mut warnings = Vec::new();
    let mut scores = Vec::with_capacity(grid1.len() * grid2.len());
    let mut best: Option<(f64, f64, f64, TLFit)> = None;
    for &l1 in grid1.values() {
        let mut cfg1 = template.clone();
        cfg1.lambda1 = l1;
        let pooled = match transfer::pooled_fit_with_design(&pooled_design, &cfg1) {
            Ok(f) => f,
            Err(e) => {
                warnings.push(format!("lambda1 {l1:.6e} failed in the pooled stage: {e}"));
                for &l2 in grid2.values() {
                    scores.push((l1, l2, None));
                }
                continue;
            }
        };
        let evals: Vec<(f64, Result<(TLFit, f64)>)> = grid2
            .values()
            .par_iter()
            .map(|&l2| {
                let mut cfg = cfg1.clone();
                cfg.lambda2 = l2;
                let outcome =
                    transfer::tl_fit_from_pooled(m, &cfg, pooled.clone(), &t_design).and_then(
                        |tl| {
                            let score = bic_score(m.target(), &tl.final_fit)?;
                            Ok((tl, score))
                        },
                    );
                (l2, outcome)
            })
            .collect();
        for (l2, outcome) in evals {
            match outcome {
                Ok((tl, score)) => {
                    scores.push((l1, l2, Some(score)));
                    let better = match &best {
                        None => true,
                        Some((_, _, best_score, _)) => score <= *best_score,
                    };
                    if better {
                        best = Some((l1, l2, score, tl));
                    }
                }
                Err(e) => {
                    warnings.push(format!("pair ({l1:.6e}, {l2:.6e}) failed: {e}"));
                    scores.push((l1, l2, None));
                }
            }
        }
    }
    match best {
        Some((lambda1, lambda2, _, fit)) => Ok(PairSelection {
            lambda1,
            lambda2,
            fit,
            scores,
            warnings,
        }),
        None => Err(Error::SelectionFailed),
    }
}
