//! Simulation populations and the replication harness.
//!
//! Covariates follow X_j = (U_j + tV)/(1+t) with U_j, V independent
//! uniforms and one shared V per row, so t tunes the dependence between
//! coordinates. Twelve target components are active; four base shapes are
//! scaled by 1, 3/2, and 2 across blocks of four. Auxiliary populations
//! perturb blocks of components by delta_f, activate component 13, and mix
//! each covariate with an averaged fresh copy with probability delta_p.
//! All active components are centered under the covariate law by high
//! resolution quadrature against its closed-form trapezoidal density.
//!
//! The harness runs cells of (scenario, method) over seeded replications,
//! scores each fit by fresh-sample Monte-Carlo integrated squared error,
//! and emits one CSV row per replication.

use crate::error::{Error, Result};
use crate::sample::Sample;
use crate::sbf::{AdditiveFit, FitConfig, SmootherKind};
use crate::select::{self, LambdaGrid};
use crate::stream::{stream_rng, stream_seed};
use crate::transfer::{MultiSampleSet, TLConfig};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Instant;

/// One simulation cell: sample sizes, dimension, dependence, dissimilarity,
/// noise, and replication control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n0: usize,
    #[serde(default = "default_n_aux")]
    pub n_aux: Vec<usize>,
    pub d: usize,
    /// Covariate dependence: 0 gives independent uniforms.
    pub t: f64,
    /// Probability that an auxiliary covariate is replaced by an averaged
    /// fresh copy.
    pub delta_p: f64,
    /// Strength of the auxiliary component modifications.
    pub delta_f: f64,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
}

fn default_n_aux() -> Vec<usize> {
    vec![200, 200]
}

fn default_noise_sd() -> f64 {
    1.0
}

fn default_replications() -> usize {
    50
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d < 13 {
            return Err(Error::Scenario {
                reason: format!("d must be at least 13 (component 13 exists), got {}", self.d),
            });
        }
        if self.n0 < 20 {
            return Err(Error::Scenario {
                reason: format!("n0 must be at least 20, got {}", self.n0),
            });
        }
        if self.n_aux.len() > 2 {
            return Err(Error::Scenario {
                reason: format!(
                    "at most two auxiliary populations are defined, got {}",
                    self.n_aux.len()
                ),
            });
        }
        if self.n_aux.iter().any(|&n| n < 2) {
            return Err(Error::Scenario {
                reason: "auxiliary sample sizes must be at least 2".into(),
            });
        }
        if !(self.t >= 0.0 && self.t.is_finite()) {
            return Err(Error::Scenario {
                reason: format!("t must be finite and nonnegative, got {}", self.t),
            });
        }
        if !(0.0..=1.0).contains(&self.delta_p) {
            return Err(Error::Scenario {
                reason: format!("delta_p must lie in [0, 1], got {}", self.delta_p),
            });
        }
        if !(self.delta_f >= 0.0 && self.delta_f.is_finite()) {
            return Err(Error::Scenario {
                reason: format!("delta_f must be finite and nonnegative, got {}", self.delta_f),
            });
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::Scenario {
                reason: format!("noise_sd must be positive, got {}", self.noise_sd),
            });
        }
        if self.replications == 0 {
            return Err(Error::Scenario {
                reason: "replications must be at least 1".into(),
            });
        }
        Ok(())
    }

    /// Stable identifier used as the CSV cell column.
    pub fn cell_id(&self) -> String {
        format!(
            "n0{}_d{}_t{}_dp{}_df{}",
            self.n0, self.d, self.t, self.delta_p, self.delta_f
        )
    }
}

/// Marginal density of X = (U + tV)/(1+t) on [0, 1]; trapezoidal for t > 0,
/// uniform at t = 0.
pub fn marginal_density(t: f64, x: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    if t == 0.0 {
        return 1.0;
    }
    let s = (1.0 + t) * x;
    let width = s.min(1.0) - (s - t).max(0.0);
    ((1.0 + t) / t * width).max(0.0)
}

/// The data-generating truth of one scenario: base shapes centered under
/// the covariate law, block scalings, and auxiliary modifications.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueModel {
    t: f64,
    delta_f: f64,
    d: usize,
    /// Centering constants a_1..a_4 of the base shapes.
    a: [f64; 4],
}

const CENTERING_PANELS: usize = 1_000_000;

fn base_raw(k: usize, u: f64) -> f64 {
    let s = (std::f64::consts::TAU * u).sin();
    match k {
        0 => u,
        1 => (2.0 * u - 1.0).powi(2),
        2 => s / (2.0 - s),
        3 => {
            let c = (std::f64::consts::TAU * u).cos();
            0.1 * s + 0.2 * s + 0.3 * s * s + 0.4 * c * c * c + 0.5 * s * s * s
        }
        _ => unreachable!("base shapes are indexed 0..4"),
    }
}

impl TrueModel {
    pub fn for_scenario(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self::with_panels(cfg.t, cfg.delta_f, cfg.d, CENTERING_PANELS))
    }

    /// Exposed so tests can compare quadrature resolutions.
    pub fn with_panels(t: f64, delta_f: f64, d: usize, panels: usize) -> Self {
        let mut a = [0.0; 4];
        for (k, slot) in a.iter_mut().enumerate() {
            *slot = crate::grid::trapezoid(0.0, 1.0, panels, |u| {
                base_raw(k, u) * marginal_density(t, u)
            });
        }
        Self { t, delta_f, d, a }
    }

    pub fn centering_constants(&self) -> [f64; 4] {
        self.a
    }

    pub fn d(&self) -> usize {
        self.d
    }

    fn base(&self, k: usize, u: f64) -> f64 {
        base_raw(k, u) - self.a[k]
    }

    /// Target component j (zero-based) at u; zero for j >= 12.
    pub fn target_component(&self, j: usize, u: f64) -> f64 {
        match j {
            0..=3 => self.base(j, u),
            4..=7 => 1.5 * self.base(j - 4, u),
            8..=11 => 2.0 * self.base(j - 8, u),
            _ => 0.0,
        }
    }

    /// Component j (zero-based) of population `pop` (0 is the target).
    pub fn component(&self, pop: usize, j: usize, u: f64) -> Result<f64> {
        let df = self.delta_f;
        Ok(match pop {
            0 => self.target_component(j, u),
            1 => match j {
                4..=6 => self.target_component(j, u) + df * self.base(j - 3, u),
                7 => self.target_component(j, u) + df * self.base(0, u),
                12 => {
                    df * (4..=7)
                        .map(|k| self.component(1, k, u).expect("fixed index"))
                        .sum::<f64>()
                }
                _ => self.target_component(j, u),
            },
            2 => match j {
                8..=10 => self.target_component(j, u) + df * self.base(j - 7, u),
                11 => self.target_component(j, u) + df * self.base(0, u),
                12 => {
                    df * (8..=11)
                        .map(|k| self.component(2, k, u).expect("fixed index"))
                        .sum::<f64>()
                }
                _ => self.target_component(j, u),
            },
            other => return Err(Error::UnknownPopulation { got: other }),
        })
    }

    /// Sum of the population's components at a covariate vector.
    pub fn true_regression(&self, pop: usize, x: &[f64]) -> Result<f64> {
        let active_end = if pop == 0 { 12 } else { 13 };
        let mut acc = 0.0;
        for j in 0..active_end.min(x.len()) {
            acc += self.component(pop, j, x[j])?;
        }
        Ok(acc)
    }

    fn draw_covariates(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let v: f64 = rng.gen();
        for slot in out.iter_mut() {
            let u: f64 = rng.gen();
            *slot = (u + self.t * v) / (1.0 + self.t);
        }
    }
}

/// Draws the target sample for one replication.
pub fn gen_target(cfg: &ScenarioConfig, model: &TrueModel, rng: &mut ChaCha8Rng) -> Result<Sample> {
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|_| Error::Scenario {
        reason: format!("invalid noise_sd {}", cfg.noise_sd),
    })?;
    let mut columns = vec![Vec::with_capacity(cfg.n0); cfg.d];
    let mut y = Vec::with_capacity(cfg.n0);
    let mut row = vec![0.0; cfg.d];
    for _ in 0..cfg.n0 {
        model.draw_covariates(rng, &mut row);
        for (j, &xj) in row.iter().enumerate() {
            columns[j].push(xj);
        }
        y.push(model.true_regression(0, &row)? + noise.sample(rng));
    }
    Sample::new(columns, y)
}

/// Draws one auxiliary sample. Each covariate is the fresh target-law draw
/// itself, or its average with an independent copy when the row's W falls
/// in the delta_p tail.
pub fn gen_auxiliary(
    cfg: &ScenarioConfig,
    model: &TrueModel,
    pop: usize,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Sample> {
    if pop != 1 && pop != 2 {
        return Err(Error::UnknownPopulation { got: pop });
    }
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|_| Error::Scenario {
        reason: format!("invalid noise_sd {}", cfg.noise_sd),
    })?;
    let mut columns = vec![Vec::with_capacity(n); cfg.d];
    let mut y = Vec::with_capacity(n);
    let mut base = vec![0.0; cfg.d];
    let mut copy = vec![0.0; cfg.d];
    for _ in 0..n {
        model.draw_covariates(rng, &mut base);
        model.draw_covariates(rng, &mut copy);
        let w: f64 = rng.gen();
        if w > 1.0 - cfg.delta_p {
            for (b, c) in base.iter_mut().zip(&copy) {
                *b = 0.5 * (*b + c);
            }
        }
        for (j, &xj) in base.iter().enumerate() {
            columns[j].push(xj);
        }
        y.push(model.true_regression(pop, &base)? + noise.sample(rng));
    }
    Sample::new(columns, y)
}

/// Monte-Carlo integrated squared error of a fit against the target truth,
/// with its standard error.
pub fn mise(
    estimate: &AdditiveFit,
    model: &TrueModel,
    mc_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    if mc_size < 1000 {
        return Err(Error::MonteCarloTooSmall {
            need: 1000,
            got: mc_size,
        });
    }
    let d = estimate.d();
    let mut row = vec![0.0; d];
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..mc_size {
        model.draw_covariates(rng, &mut row);
        let truth = model.true_regression(0, &row)?;
        let err = estimate.predict(&row)? - truth;
        let sq = err * err;
        sum += sq;
        sum_sq += sq * sq;
    }
    let n = mc_size as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    Ok((mean, (var / n).sqrt()))
}

/// Estimators compared in the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    /// Penalized backfitting with the local-constant smoother.
    Nw,
    /// Penalized backfitting with the local-linear smoother, target only.
    Ll,
    /// Two-stage transfer estimator.
    Tl,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Nw => "nw",
            Method::Ll => "ll",
            Method::Tl => "tl",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nw" => Ok(Method::Nw),
            "ll" => Ok(Method::Ll),
            "tl" => Ok(Method::Tl),
            other => Err(Error::InvalidConfig {
                reason: format!("unknown method '{other}' (expected nw, ll, or tl)"),
            }),
        }
    }
}

/// Harness controls independent of the scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub mc_size: usize,
    /// When false, the runtime column is written as 0.000 so identical
    /// seeds produce byte-identical tables.
    pub timings: bool,
    pub base_fit: FitConfig,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            mc_size: 100_000,
            timings: false,
            base_fit: FitConfig::default(),
        }
    }
}

/// One CSV row of the replication table.
#[derive(Debug, Clone, PartialEq)]
pub struct RepRow {
    pub cell: String,
    pub method: Method,
    pub rep: usize,
    pub seed: u64,
    pub mise: Option<f64>,
    pub mc_se: Option<f64>,
    pub runtime_s: f64,
    pub status: String,
}

impl RepRow {
    fn record(&self) -> [String; 8] {
        [
            self.cell.clone(),
            self.method.name().to_string(),
            self.rep.to_string(),
            self.seed.to_string(),
            self.mise.map_or(String::new(), |v| format!("{v:.6e}")),
            self.mc_se.map_or(String::new(), |v| format!("{v:.6e}")),
            format!("{:.3}", self.runtime_s),
            self.status.clone(),
        ]
    }
}

/// The full study grid for one target size: d in {200, 400},
/// t in {0.1, 1.0}, delta_p in {0.1, 0.9}, delta_f in {0.5, 1, 2, 3}.
pub fn study_grid(n0: usize, seed: u64, replications: usize) -> Vec<ScenarioConfig> {
    let mut cells = Vec::with_capacity(32);
    for &d in &[200, 400] {
        for &t in &[0.1, 1.0] {
            for &delta_p in &[0.1, 0.9] {
                for &delta_f in &[0.5, 1.0, 2.0, 3.0] {
                    cells.push(ScenarioConfig {
                        n0,
                        n_aux: vec![200, 200],
                        d,
                        t,
                        delta_p,
                        delta_f,
                        noise_sd: 1.0,
                        seed,
                        replications,
                    });
                }
            }
        }
    }
    cells
}

/// Runs every (cell, replication, method) combination and writes the CSV
/// table. Replications are parallel; rows come out in deterministic
/// cell-major, replication, method order. Per-row failures are recorded in
/// the status column and the run continues.
pub fn run_experiment<W: Write>(
    cells: &[ScenarioConfig],
    methods: &[Method],
    opts: &RunOptions,
    out: W,
) -> Result<Vec<RepRow>> {
    for cfg in cells {
        cfg.validate()?;
    }
    if methods.is_empty() {
        return Err(Error::InvalidConfig {
            reason: "no methods requested".into(),
        });
    }
    opts.base_fit.validate()?;

    let units: Vec<(usize, usize)> = cells
        .iter()
        .enumerate()
        .flat_map(|(ci, cfg)| (0..cfg.replications).map(move |rep| (ci, rep)))
        .collect();

    let rows: Vec<Vec<RepRow>> = units
        .par_iter()
        .map(|&(ci, rep)| run_replication(&cells[ci], methods, opts, rep))
        .collect::<Result<_>>()?;

    let rows: Vec<RepRow> = rows.into_iter().flatten().collect();
    let mut writer = csv::Writer::from_writer(out);
    writer
        .write_record(["cell", "method", "rep", "seed", "mise", "mc_se", "runtime_s", "status"])
        .map_err(|e| Error::Artifact {
            reason: format!("failed to write CSV header: {e}"),
        })?;
    for row in &rows {
        writer.write_record(row.record()).map_err(|e| Error::Artifact {
            reason: format!("failed to write CSV row: {e}"),
        })?;
    }
    writer.flush().map_err(|e| Error::Artifact {
        reason: format!("failed to flush CSV: {e}"),
    })?;
    Ok(rows)
}

/// Per-replication stream salts; methods share the same data and the same
/// Monte-Carlo evaluation points.
const STREAM_TARGET: u64 = 0;
const STREAM_AUX1: u64 = 1;
const STREAM_AUX2: u64 = 2;
const STREAM_MISE: u64 = 3;
const STREAMS_PER_REP: u64 = 8;

fn rep_salt(rep: usize, stream: u64) -> u64 {
    rep as u64 * STREAMS_PER_REP + stream
}

fn run_replication(
    cfg: &ScenarioConfig,
    methods: &[Method],
    opts: &RunOptions,
    rep: usize,
) -> Result<Vec<RepRow>> {
    let model = TrueModel::for_scenario(cfg)?;
    let rep_seed = stream_seed(cfg.seed, rep_salt(rep, STREAM_TARGET));
    let cell = cfg.cell_id();

    let target = gen_target(cfg, &model, &mut stream_rng(cfg.seed, rep_salt(rep, STREAM_TARGET)))?;
    let mut auxiliaries = Vec::new();
    for (k, &n_a) in cfg.n_aux.iter().enumerate() {
        let stream = if k == 0 { STREAM_AUX1 } else { STREAM_AUX2 };
        let pop = k + 1;
        let s = gen_auxiliary(
            cfg,
            &model,
            pop,
            n_a,
            &mut stream_rng(cfg.seed, rep_salt(rep, stream)),
        )?;
        auxiliaries.push((format!("pop{pop}"), s));
    }

    let mut rows = Vec::with_capacity(methods.len());
    for &method in methods {
        let start = Instant::now();
        let fitted = fit_method(&target, &auxiliaries, method, opts);
        let evaluated = fitted.and_then(|f| {
            mise(
                &f,
                &model,
                opts.mc_size,
                &mut stream_rng(cfg.seed, rep_salt(rep, STREAM_MISE)),
            )
        });
        let runtime_s = if opts.timings {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        };
        let row = match evaluated {
            Ok((value, se)) => RepRow {
                cell: cell.clone(),
                method,
                rep,
                seed: rep_seed,
                mise: Some(value),
                mc_se: Some(se),
                runtime_s,
                status: "ok".into(),
            },
            Err(e) => RepRow {
                cell: cell.clone(),
                method,
                rep,
                seed: rep_seed,
                mise: None,
                mc_se: None,
                runtime_s,
                status: format!("error: {e}"),
            },
        };
        rows.push(row);
    }
    Ok(rows)
}

/// Fits one method on shared replication data: rule-of-thumb bandwidths and
/// BIC-selected penalties throughout.
fn fit_method(
    target: &Sample,
    auxiliaries: &[(String, Sample)],
    method: Method,
    opts: &RunOptions,
) -> Result<AdditiveFit> {
    let (bw_target, _) = select::rot_bandwidth(target)?;
    match method {
        Method::Nw | Method::Ll => {
            let cfg = FitConfig {
                smoother: if method == Method::Nw {
                    SmootherKind::NadarayaWatson
                } else {
                    SmootherKind::LocalLinear
                },
                ..opts.base_fit.clone()
            };
            let grid = LambdaGrid::default_for_response(target.y())?;
            Ok(select::select_lambda(target, &bw_target, &grid, &cfg)?.fit)
        }
        Method::Tl => {
            let m = MultiSampleSet::new(target.clone(), auxiliaries.to_vec())?;
            let n_pool: usize = target.n() + auxiliaries.iter().map(|(_, s)| s.n()).sum::<usize>();
            let mut pooled_cols: Vec<Vec<f64>> = (0..target.d())
                .map(|j| target.column(j).to_vec())
                .collect();
            for (_, s) in auxiliaries {
                for (j, col) in pooled_cols.iter_mut().enumerate() {
                    col.extend_from_slice(s.column(j));
                }
            }
            let col_refs: Vec<&[f64]> = pooled_cols.iter().map(|c| c.as_slice()).collect();
            let (bw_pooled, _) = select::rot_bandwidth_for_rate(&col_refs, n_pool as f64)?;
            let template = TLConfig {
                lambda1: 0.0,
                lambda2: 0.0,
                bw_pooled,
                bw_target,
                include_target_in_pool: true,
                inner: opts.base_fit.clone(),
            };
            let axis = LambdaGrid::default_pair_axis(target.y())?;
            let sel = select::select_lambda_pair(&m, &template, &axis, &axis)?;
            Ok(sel.fit.final_fit)
        }
    }
}
