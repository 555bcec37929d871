//! Command-line front end. Subcommands cover target-only fitting, the
//! two-stage transfer fit, transferable-source detection, simulation
//! tables, and the screening pipeline for expression-style CSV inputs.
//!
//! Exit codes: 0 success, 1 usage problem, 2 data problem, 3 numerical
//! failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use backfit::artifact::{digest_file, FitArtifact, Provenance};
use backfit::detect::detect_sources;
use backfit::kernel::Bandwidths;
use backfit::sample::Sample;
use backfit::sbf::{self, AdditiveFit, FitConfig};
use backfit::screen::{
    load_csv, normalize_response, scale_unit_interval, screen_features, RawTable,
};
use backfit::select::{
    rot_bandwidth, rot_bandwidth_for_rate, select_lambda, select_lambda_pair, LambdaGrid,
};
use backfit::sim::{run_experiment, Method, RunOptions, ScenarioConfig};
use backfit::transfer::{tl_fit, MultiSampleSet, TLConfig};
use backfit::{Error, ErrorClass};
use clap::{ArgGroup, Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "backfit",
    version,
    about = "Sparse additive regression by penalized smooth backfitting"
)]
struct Cli {
    /// Seed for every randomized step (penalty splits, simulation streams).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Size of the worker thread pool; defaults to the core count.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Report progress and diagnostics on stderr.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the penalized additive model on one CSV sample.
    Fit(FitArgs),
    /// Fit the two-stage estimator with auxiliary samples.
    TlFit(TlFitArgs),
    /// Score candidate sources for transferability.
    Detect(DetectArgs),
    /// Run simulation cells and write the replication table.
    Simulate(SimulateArgs),
    /// Screen, rescale, and response-normalize a raw CSV.
    Screen(ScreenArgs),
}

#[derive(Args)]
#[command(group = ArgGroup::new("penalty").required(true).args(["lambda", "bic"]))]
struct FitArgs {
    /// CSV file with a header row; covariates must already lie in [0, 1].
    #[arg(long)]
    data: PathBuf,
    /// Name of the response column.
    #[arg(long)]
    response: String,
    /// Fixed penalty level.
    #[arg(long)]
    lambda: Option<f64>,
    /// Select the penalty by BIC over a log-spaced grid.
    #[arg(long)]
    bic: bool,
    /// "auto" for rule-of-thumb bandwidths, or comma-separated values
    /// (one shared value or one per covariate).
    #[arg(long, default_value = "auto")]
    bandwidth: String,
    /// Number of evaluation grid points.
    #[arg(long, default_value_t = 101)]
    grid: usize,
    /// Output path for the fit artifact (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(group = ArgGroup::new("penalties").required(true).args(["lambda1", "bic2d"]))]
struct TlFitArgs {
    /// Target CSV file.
    #[arg(long)]
    data: PathBuf,
    /// Auxiliary CSV file; repeat the flag for several sources.
    #[arg(long, required = true)]
    aux: Vec<PathBuf>,
    /// Name of the response column, shared by every file.
    #[arg(long)]
    response: String,
    /// Fixed pooled-stage penalty (requires --lambda2).
    #[arg(long, requires = "lambda2")]
    lambda1: Option<f64>,
    /// Fixed correction-stage penalty.
    #[arg(long)]
    lambda2: Option<f64>,
    /// Select both penalties by BIC over a two-dimensional grid.
    #[arg(long)]
    bic2d: bool,
    /// "auto" derives stage bandwidths from the pooled and target sizes;
    /// explicit comma-separated values are used for both stages.
    #[arg(long, default_value = "auto")]
    bandwidth: String,
    /// Keep the target sample out of the pooled stage.
    #[arg(long)]
    no_pool_target: bool,
    /// Number of evaluation grid points.
    #[arg(long, default_value_t = 101)]
    grid: usize,
    /// Output path for the final-fit artifact (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    /// Target CSV file.
    #[arg(long)]
    data: PathBuf,
    /// Candidate source CSV file; repeat the flag for several candidates.
    #[arg(long, required = true)]
    aux: Vec<PathBuf>,
    /// Name of the response column, shared by every file.
    #[arg(long)]
    response: String,
    /// Separation constant; candidates with score below c_sd / 4 are
    /// accepted.
    #[arg(long, default_value_t = 1.0)]
    c_sd: f64,
    /// Number of random-split repetitions averaged into each score.
    #[arg(long, default_value_t = 2)]
    splits: usize,
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML scenario file; inline flags are an alternative.
    #[arg(long, conflicts_with_all = ["n0", "d", "t", "delta_p", "delta_f"])]
    scenario: Option<PathBuf>,
    /// Target sample size.
    #[arg(long)]
    n0: Option<usize>,
    /// Number of covariates (at least 13).
    #[arg(long)]
    d: Option<usize>,
    /// Covariate dependence parameter.
    #[arg(long)]
    t: Option<f64>,
    /// Covariate perturbation probability for auxiliary samples.
    #[arg(long)]
    delta_p: Option<f64>,
    /// Component dissimilarity of auxiliary populations.
    #[arg(long)]
    delta_f: Option<f64>,
    /// Auxiliary sample sizes, comma separated.
    #[arg(long)]
    n_aux: Option<String>,
    /// Noise standard deviation.
    #[arg(long)]
    noise_sd: Option<f64>,
    /// Number of replications per cell.
    #[arg(long)]
    reps: Option<usize>,
    /// Estimators to run, comma separated among nw, ll, tl.
    #[arg(long, default_value = "nw,ll,tl")]
    methods: String,
    /// Output path for the replication table (CSV).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScreenArgs {
    /// Raw CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Name of the response column.
    #[arg(long)]
    response: String,
    /// Covariates kept by the variance stage.
    #[arg(long, default_value_t = 3000)]
    top_var: usize,
    /// Covariates kept by the correlation stage.
    #[arg(long, default_value_t = 450)]
    top_cor: usize,
    /// Standard deviation the response is rescaled to.
    #[arg(long, default_value_t = 2.5)]
    target_sd: f64,
    /// Output path for the processed CSV.
    #[arg(long)]
    out: PathBuf,
    /// Optional output path for the column min/max scale (JSON), for
    /// applying the same transform to held-out data.
    #[arg(long)]
    scale_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    ExitCode::from(run())
}

fn run() -> u8 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return 1;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("warning: thread pool already initialized: {e}");
        }
    }
    let verbose = cli.verbose;
    let seed = cli.seed;
    let outcome = match cli.command {
        Command::Fit(args) => cmd_fit(args, seed, verbose),
        Command::TlFit(args) => cmd_tl_fit(args, seed, verbose),
        Command::Detect(args) => cmd_detect(args, seed, verbose),
        Command::Simulate(args) => cmd_simulate(args, seed, verbose),
        Command::Screen(args) => cmd_screen(args, verbose),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e.class() {
                ErrorClass::Usage => 1,
                ErrorClass::Data => 2,
                ErrorClass::Numerical => 3,
            }
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read_sample(path: &Path, response: &str, verbose: bool) -> Result<Sample, Error> {
    let (table, dropped) = load_csv(path, response)?;
    if dropped > 0 {
        eprintln!("{}: dropped {dropped} unusable rows", path.display());
    }
    if verbose {
        eprintln!(
            "{}: {} rows, {} covariates",
            path.display(),
            table.n(),
            table.p() - 1
        );
    }
    table.to_sample()
}

fn parse_bandwidths(spec: &str, d: usize) -> Result<Bandwidths, Error> {
    let values: Vec<f64> = spec
        .split(',')
        .map(|v| {
            v.trim().parse::<f64>().map_err(|_| Error::InvalidConfig {
                reason: format!("bandwidth '{v}' is not a number"),
            })
        })
        .collect::<Result<_, _>>()?;
    match values.len() {
        1 => Bandwidths::uniform(values[0], d),
        n if n == d => Bandwidths::new(values),
        n => Err(Error::InvalidConfig {
            reason: format!("{n} bandwidth values for {d} covariates (expected 1 or {d})"),
        }),
    }
}

fn report_warnings(prefix: &str, warnings: &[String], verbose: bool) {
    if verbose {
        for w in warnings {
            eprintln!("{prefix}: {w}");
        }
    }
}

fn write_artifact(
    fit: &AdditiveFit,
    config: serde_json::Value,
    data: &Path,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), Error> {
    let provenance = Provenance {
        seed,
        input_digest: Some(digest_file(data)?),
    };
    let artifact = FitArtifact::from_fit(fit, config, provenance);
    artifact.save(out)?;
    println!(
        "wrote {} ({} of {} components active)",
        out.display(),
        fit.active_set.len(),
        fit.d()
    );
    Ok(())
}

fn cmd_fit(args: FitArgs, seed: Option<u64>, verbose: bool) -> Result<(), Error> {
    let sample = read_sample(&args.data, &args.response, verbose)?;
    let bw = if args.bandwidth == "auto" {
        let (bw, warnings) = rot_bandwidth(&sample)?;
        report_warnings("bandwidth", &warnings, verbose);
        bw
    } else {
        parse_bandwidths(&args.bandwidth, sample.d())?
    };
    let cfg = FitConfig {
        lambda: args.lambda.unwrap_or(0.0),
        grid_size: args.grid,
        ..FitConfig::default()
    };

    let (fit, selection) = if args.bic {
        let grid = LambdaGrid::default_for_response(sample.y())?;
        let sel = select_lambda(&sample, &bw, &grid, &cfg)?;
        report_warnings("lambda scan", &sel.warnings, verbose);
        if verbose {
            eprintln!("selected lambda {:.6e}", sel.lambda);
        }
        let lambda = sel.lambda;
        (sel.fit, serde_json::json!({ "bic": true, "lambda": lambda }))
    } else {
        let fit = sbf::fit(&sample, &bw, &cfg, None)?;
        (fit, serde_json::json!({ "bic": false, "lambda": cfg.lambda }))
    };

    let mut config = serde_json::to_value(&cfg).map_err(|e| Error::Artifact {
        reason: e.to_string(),
    })?;
    config["selection"] = selection;
    write_artifact(&fit, config, &args.data, seed, &args.out)
}

fn load_multi_sample(
    data: &Path,
    aux: &[PathBuf],
    response: &str,
    verbose: bool,
) -> Result<MultiSampleSet, Error> {
    let target = read_sample(data, response, verbose)?;
    let mut sources = Vec::with_capacity(aux.len());
    for path in aux {
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        sources.push((label, read_sample(path, response, verbose)?));
    }
    MultiSampleSet::new(target, sources)
}

fn pooled_rot(m: &MultiSampleSet, include_target: bool) -> Result<Bandwidths, Error> {
    let d = m.d();
    let mut joined: Vec<Vec<f64>> = vec![Vec::new(); d];
    if include_target || m.auxiliaries().is_empty() {
        for (j, col) in joined.iter_mut().enumerate() {
            col.extend_from_slice(m.target().column(j));
        }
    }
    for (_, s) in m.auxiliaries() {
        for (j, col) in joined.iter_mut().enumerate() {
            col.extend_from_slice(s.column(j));
        }
    }
    let refs: Vec<&[f64]> = joined.iter().map(|c| c.as_slice()).collect();
    let n_pool = joined[0].len() as f64;
    let (bw, _) = rot_bandwidth_for_rate(&refs, n_pool)?;
    Ok(bw)
}

fn cmd_tl_fit(args: TlFitArgs, seed: Option<u64>, verbose: bool) -> Result<(), Error> {
    let m = load_multi_sample(&args.data, &args.aux, &args.response, verbose)?;
    let (bw_pooled, bw_target) = if args.bandwidth == "auto" {
        let (bw_t, warnings) = rot_bandwidth(m.target())?;
        report_warnings("bandwidth", &warnings, verbose);
        (pooled_rot(&m, !args.no_pool_target)?, bw_t)
    } else {
        let bw = parse_bandwidths(&args.bandwidth, m.d())?;
        (bw.clone(), bw)
    };
    let mut cfg = TLConfig::new(
        args.lambda1.unwrap_or(0.0),
        args.lambda2.unwrap_or(0.0),
        bw_pooled,
        bw_target,
    );
    cfg.include_target_in_pool = !args.no_pool_target;
    cfg.inner.grid_size = args.grid;

    let (fit, selection) = if args.bic2d {
        let axis = LambdaGrid::default_pair_axis(m.target().y())?;
        let sel = select_lambda_pair(&m, &cfg, &axis, &axis)?;
        report_warnings("lambda scan", &sel.warnings, verbose);
        if verbose {
            eprintln!(
                "selected lambda1 {:.6e}, lambda2 {:.6e}",
                sel.lambda1, sel.lambda2
            );
        }
        let pair = serde_json::json!({
            "bic2d": true,
            "lambda1": sel.lambda1,
            "lambda2": sel.lambda2,
        });
        (sel.fit, pair)
    } else {
        let fit = tl_fit(&m, &cfg)?;
        let pair = serde_json::json!({
            "bic2d": false,
            "lambda1": cfg.lambda1,
            "lambda2": cfg.lambda2,
        });
        (fit, pair)
    };

    let mut config = serde_json::to_value(&cfg.inner).map_err(|e| Error::Artifact {
        reason: e.to_string(),
    })?;
    config["selection"] = selection;
    config["include_target_in_pool"] = serde_json::json!(cfg.include_target_in_pool);
    write_artifact(&fit.final_fit, config, &args.data, seed, &args.out)
}

fn cmd_detect(args: DetectArgs, seed: Option<u64>, verbose: bool) -> Result<(), Error> {
    let m = load_multi_sample(&args.data, &args.aux, &args.response, verbose)?;
    let d = m.d();
    let placeholder = Bandwidths::uniform(0.1, d)?;
    let cfg = TLConfig::new(0.0, 0.0, placeholder.clone(), placeholder);
    let scores = detect_sources(
        m.target(),
        m.auxiliaries(),
        &cfg,
        args.c_sd,
        args.splits,
        seed.unwrap_or(0),
    )?;
    println!("candidate,score,accepted");
    for s in &scores {
        println!("{},{:.6e},{}", s.label, s.score, s.accepted);
    }
    Ok(())
}

fn parse_methods(spec: &str) -> Result<Vec<Method>, Error> {
    spec.split(',')
        .map(|m| Method::from_str(m.trim()))
        .collect()
}

fn cmd_simulate(args: SimulateArgs, seed: Option<u64>, verbose: bool) -> Result<(), Error> {
    let mut cfg = match &args.scenario {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            toml::from_str::<ScenarioConfig>(&text).map_err(|e| Error::Scenario {
                reason: format!("{}: {e}", path.display()),
            })?
        }
        None => {
            let missing = [
                ("--n0", args.n0.is_none()),
                ("--d", args.d.is_none()),
                ("--t", args.t.is_none()),
                ("--delta-p", args.delta_p.is_none()),
                ("--delta-f", args.delta_f.is_none()),
            ]
            .iter()
            .filter(|(_, m)| *m)
            .map(|(f, _)| *f)
            .collect::<Vec<_>>();
            if !missing.is_empty() {
                return Err(Error::InvalidConfig {
                    reason: format!(
                        "either --scenario or all of the cell flags are required; missing {}",
                        missing.join(", ")
                    ),
                });
            }
            let n_aux = match &args.n_aux {
                None => vec![200, 200],
                Some(spec) => spec
                    .split(',')
                    .map(|v| {
                        v.trim().parse::<usize>().map_err(|_| Error::Scenario {
                            reason: format!("auxiliary size '{v}' is not an integer"),
                        })
                    })
                    .collect::<Result<_, _>>()?,
            };
            ScenarioConfig {
                n0: args.n0.unwrap(),
                n_aux,
                d: args.d.unwrap(),
                t: args.t.unwrap(),
                delta_p: args.delta_p.unwrap(),
                delta_f: args.delta_f.unwrap(),
                noise_sd: args.noise_sd.unwrap_or(1.0),
                seed: 0,
                replications: 1,
            }
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(r) = args.reps {
        cfg.replications = r;
    }
    let methods = parse_methods(&args.methods)?;

    let out = fs::File::create(&args.out).map_err(|e| io_err(&args.out, e))?;
    let rows = run_experiment(
        &[cfg],
        &methods,
        &RunOptions::default(),
        std::io::BufWriter::new(out),
    )?;
    let failures = rows.iter().filter(|r| r.status != "ok").count();
    println!(
        "wrote {} ({} rows, {failures} failed)",
        args.out.display(),
        rows.len()
    );
    if verbose {
        for row in rows.iter().filter(|r| r.status != "ok") {
            eprintln!("{} {} rep {}: {}", row.cell, row.method.name(), row.rep, row.status);
        }
    }
    Ok(())
}

fn write_table(table: &RawTable, out: &Path) -> Result<(), Error> {
    let file = fs::File::create(out).map_err(|e| io_err(out, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(table.names()).map_err(|e| Error::Csv {
        path: out.display().to_string(),
        source: e,
    })?;
    let mut record = Vec::with_capacity(table.p());
    for i in 0..table.n() {
        record.clear();
        for j in 0..table.p() {
            record.push(format!("{}", table.column(j)[i]));
        }
        w.write_record(&record).map_err(|e| Error::Csv {
            path: out.display().to_string(),
            source: e,
        })?;
    }
    w.flush().map_err(|e| io_err(out, e))
}

fn cmd_screen(args: ScreenArgs, verbose: bool) -> Result<(), Error> {
    let (raw, dropped) = load_csv(&args.data, &args.response)?;
    if dropped > 0 {
        eprintln!("{}: dropped {dropped} unusable rows", args.data.display());
    }
    let (screened, warnings) = screen_features(&raw, args.top_var, args.top_cor)?;
    report_warnings("screen", &warnings, verbose);
    let (scaled, scale) = scale_unit_interval(&screened);
    let normalized = normalize_response(&scaled, args.target_sd)?;
    write_table(&normalized, &args.out)?;
    if let Some(path) = &args.scale_out {
        let json = serde_json::to_string_pretty(&scale).map_err(|e| Error::Artifact {
            reason: e.to_string(),
        })?;
        fs::write(path, json).map_err(|e| io_err(path, e))?;
    }
    println!(
        "wrote {} ({} rows, {} covariates kept of {})",
        args.out.display(),
        normalized.n(),
        normalized.p() - 1,
        raw.p() - 1
    );
    Ok(())
}
