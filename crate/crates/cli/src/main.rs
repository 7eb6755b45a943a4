//! `areal` — fit a CAR spatial model and produce loss-aware predictions.
//!
//! Subcommands form a pipeline over plain CSV artifacts:
//!
//! ```text
//! areal fit      data.csv + adjacency.csv  ->  params.csv fitted.csv diagnostics.csv
//! areal predict  fitted.csv                ->  predictors_<label>.csv
//! areal sweep    fitted.csv + data.csv     ->  sweep_<family>.csv
//! areal risk     fitted.csv + predictors   ->  risk_rr.csv risk_summary.csv
//! areal report   risk_rr.csv               ->  report.csv (+ stdout ranking)
//! ```
//!
//! Every command drops a JSON manifest next to its outputs with SHA-256
//! digests of the inputs; identical inputs and seed give byte-identical
//! data artifacts. The manifest's `created_utc` is wall-clock time unless
//! `SOURCE_DATE_EPOCH` is set (the usual reproducible-build convention),
//! in which case manifests are byte-identical too.
//!
//! Exit codes: 0 success, 2 input error, 3 numerical error, 4 domain
//! error (loss/predictor incompatibilities).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use areal_core::io;
use areal_core::loss::{predictor_table, LossFamily, LossSpec};
use areal_core::power_ratio::{default_grid, sweep};
use areal_core::risk::{risk_matrix, summarize};
use areal_core::sampler::{run_chain, PriorSpec, SamplerConfig, TauPrior};
use areal_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "areal",
    version,
    about = "CAR-model spatial prediction under asymmetric loss",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the CAR model by MCMC and write draw files
    Fit(FitArgs),
    /// Compute optimal predictors from fitted draws under one loss
    Predict(PredictArgs),
    /// Scan the power ratio over an asymmetry-parameter grid
    Sweep(SweepArgs),
    /// Cross candidate predictors with true losses into relative risks
    Risk(RiskArgs),
    /// Rank predictors from a relative-risk file
    Report(ReportArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Data CSV: region_id,z,<covariate...>
    #[arg(long)]
    data: PathBuf,
    /// Adjacency CSV: region_a,region_b (labels, one edge per row)
    #[arg(long)]
    adjacency: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Divide a column by a factor on read, e.g. --scale z=10000
    #[arg(long, value_name = "COL=FACTOR")]
    scale: Vec<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 15_000)]
    iters: usize,
    #[arg(long, default_value_t = 5_000)]
    burn_in: usize,
    #[arg(long, default_value_t = 1)]
    thin: usize,
    /// Known measurement-error variance; selects the latent-process variant
    #[arg(long)]
    sigma2_meas: Option<f64>,
    /// Prior variance of the intercept
    #[arg(long, default_value_t = 5.0)]
    beta0_prior_var: f64,
    /// Prior variance of each covariate coefficient
    #[arg(long, default_value_t = 5.0)]
    beta_prior_var: f64,
    /// Half-t prior degrees of freedom for tau
    #[arg(long, default_value_t = 15.0)]
    tau_df: f64,
    /// Half-t prior scale for tau (default sqrt(10))
    #[arg(long, conflicts_with = "tau_scale_sq")]
    tau_scale: Option<f64>,
    /// Half-t prior squared scale for tau (scale = sqrt of this; default 10)
    #[arg(long)]
    tau_scale_sq: Option<f64>,
    /// Initial random-walk step for rho proposals
    #[arg(long, default_value_t = 0.1)]
    rho_step: f64,
    /// Initial random-walk step for log-tau proposals
    #[arg(long, default_value_t = 0.3)]
    log_tau_step: f64,
    /// Freeze proposal steps (skip burn-in adaptation)
    #[arg(long)]
    no_adapt: bool,
    /// Lower tau prior truncation
    #[arg(long, default_value_t = 1e-6)]
    tau_min: f64,
    /// Upper tau prior truncation
    #[arg(long, default_value_t = 1e6)]
    tau_max: f64,
}

#[derive(Args)]
struct PredictArgs {
    /// fitted.csv from a fit run
    #[arg(long)]
    fitted: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// squared_error, linex, or pdl
    #[arg(long)]
    loss: String,
    /// Asymmetry parameter (required for linex and pdl)
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    /// LINEX overall scale (does not move the optimal predictor)
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    /// fitted.csv from a fit run
    #[arg(long)]
    fitted: PathBuf,
    /// Data CSV providing the observed values the residuals compare against
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Same column scaling used at fit time
    #[arg(long, value_name = "COL=FACTOR")]
    scale: Vec<String>,
    /// linex or pdl
    #[arg(long)]
    loss: String,
    /// MIN:MAX:STEP range or comma-separated values; defaults to the
    /// family's conventional grid (linex [-3,-0.05] by 0.05, pdl 1..60)
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
}

#[derive(Args)]
struct RiskArgs {
    /// fitted.csv from a fit run
    #[arg(long)]
    fitted: PathBuf,
    /// Predictor table CSVs (repeatable)
    #[arg(long = "predictors", required = true)]
    predictors: Vec<PathBuf>,
    /// True losses, e.g. squared_error, linex:-0.6, pdl:38 (repeatable)
    #[arg(long = "true-loss", required = true, allow_hyphen_values = true)]
    true_losses: Vec<String>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// risk_rr.csv from a risk run
    #[arg(long)]
    risk_long: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Fit(args) => cmd_fit(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Risk(args) => cmd_risk(args),
        Command::Report(args) => cmd_report(args),
    }
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::InvalidInput(format!("cannot create {}: {e}", dir.display())))
}

fn parse_scale(args: &[String]) -> Result<Vec<(String, f64)>> {
    args.iter()
        .map(|s| {
            let (col, factor) = s.split_once('=').ok_or_else(|| {
                Error::InvalidParameter(format!("--scale expects COL=FACTOR, got '{s}'"))
            })?;
            let factor: f64 = factor.parse().map_err(|_| {
                Error::InvalidParameter(format!("--scale factor '{factor}' is not a number"))
            })?;
            Ok((col.to_string(), factor))
        })
        .collect()
}

fn created_utc() -> String {
    // honor the reproducible-build convention when present
    if let Ok(epoch) = std::env::var("SOURCE_DATE_EPOCH") {
        if let Ok(secs) = epoch.parse::<i64>() {
            if let Some(t) = chrono::DateTime::from_timestamp(secs, 0) {
                return t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
            }
        }
    }
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn write_manifest(
    out_dir: &Path,
    name: &str,
    inputs: &[&Path],
    seed: Option<u64>,
    priors: Option<PriorSpec>,
    sampler: Option<SamplerConfig>,
) -> Result<()> {
    let manifest = io::RunManifest {
        engine_version: env!("CARGO_PKG_VERSION").to_string(),
        command_line: std::env::args().collect(),
        created_utc: created_utc(),
        seed,
        inputs: io::RunManifest::digest_inputs(inputs)?,
        priors,
        sampler,
    };
    let path = out_dir.join(name);
    io::write_manifest(&path, &manifest)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn wrote(path: &Path) {
    eprintln!("wrote {}", path.display());
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let scale = parse_scale(&args.scale)?;
    if let Some(s2) = args.sigma2_meas {
        if !(s2.is_finite() && s2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "--sigma2-meas must be positive and finite, got {s2}"
            )));
        }
    }
    let dataset = io::read_dataset(&args.data, &scale, args.sigma2_meas)?;
    let graph = io::read_adjacency(&args.adjacency, dataset.region_ids())?;

    let tau_scale = match (args.tau_scale, args.tau_scale_sq) {
        (Some(s), _) => s,
        (None, Some(s2)) => {
            if !(s2.is_finite() && s2 > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "--tau-scale-sq must be positive, got {s2}"
                )));
            }
            s2.sqrt()
        }
        (None, None) => 10f64.sqrt(),
    };
    let priors = PriorSpec {
        sigma2_beta0: args.beta0_prior_var,
        sigma2_betaj: args.beta_prior_var,
        tau_prior: TauPrior::HalfT {
            df: args.tau_df,
            scale: tau_scale,
        },
    };
    let config = SamplerConfig {
        total_iters: args.iters,
        burn_in: args.burn_in,
        thin: args.thin,
        seed: args.seed,
        rho_step: args.rho_step,
        log_tau_step: args.log_tau_step,
        adapt: !args.no_adapt,
        tau_range: (args.tau_min, args.tau_max),
    };
    priors.validate()?;
    config.validate()?;

    let (lo, hi) = graph.rho_bounds();
    eprintln!(
        "fitting {} regions, {} covariate(s), rho interval ({lo:.4}, {hi:.4}), {} iterations",
        dataset.n(),
        dataset.p(),
        config.total_iters
    );
    let draws = run_chain(&dataset, &graph, &priors, &config)?;
    eprintln!(
        "acceptance: rho {:.2}, tau {:.2}; retained {} draws",
        draws.acceptance.rho,
        draws.acceptance.tau,
        draws.params.len()
    );

    ensure_out_dir(&args.out_dir)?;
    let params_path = args.out_dir.join("params.csv");
    io::write_params_csv(&params_path, &draws.params)?;
    wrote(&params_path);
    let fitted_path = args.out_dir.join("fitted.csv");
    io::write_fitted_csv(&fitted_path, &draws.fitted)?;
    wrote(&fitted_path);

    let diag_path = args.out_dir.join("diagnostics.csv");
    let mut rows: Vec<Vec<String>> = Vec::new();
    for d in &draws.diagnostics {
        let accept = match d.name.as_str() {
            "rho" => io::fmt_f64(draws.acceptance.rho),
            "tau" => io::fmt_f64(draws.acceptance.tau),
            _ => String::new(),
        };
        rows.push(vec![
            d.name.clone(),
            io::fmt_f64(d.mean),
            io::fmt_f64(d.sd),
            io::fmt_f64(d.ess),
            io::fmt_f64(d.split_rhat),
            accept,
        ]);
    }
    write_simple_csv(
        &diag_path,
        &["param", "mean", "sd", "ess", "split_rhat", "accept_rate"],
        &rows,
    )?;
    wrote(&diag_path);

    write_manifest(
        &args.out_dir,
        "manifest_fit.json",
        &[&args.data, &args.adjacency],
        Some(args.seed),
        Some(priors),
        Some(config),
    )
}

fn write_simple_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)
        .map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", path.display())))
}

fn parse_loss_spec(family: &str, lambda: Option<f64>, gamma: Option<f64>) -> Result<LossSpec> {
    let family: LossFamily = family.parse()?;
    let spec = match family {
        LossFamily::SquaredError => {
            if lambda.is_some() {
                return Err(Error::InvalidParameter(
                    "squared_error takes no --lambda".into(),
                ));
            }
            LossSpec::squared_error()
        }
        LossFamily::Linex => {
            let lambda = lambda.ok_or_else(|| {
                Error::InvalidParameter("linex requires --lambda (nonzero)".into())
            })?;
            LossSpec::linex(lambda)?
        }
        LossFamily::Pdl => {
            let lambda =
                lambda.ok_or_else(|| Error::InvalidParameter("pdl requires --lambda".into()))?;
            LossSpec::pdl(lambda)?
        }
    };
    match (gamma, family) {
        (None, _) => Ok(spec),
        (Some(g), LossFamily::Linex) => spec.with_gamma(g),
        (Some(_), _) => Err(Error::InvalidParameter(
            "--gamma only applies to linex".into(),
        )),
    }
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let spec = parse_loss_spec(&args.loss, args.lambda, args.gamma)?;
    let draws = io::read_fitted_csv(&args.fitted)?;
    let table = predictor_table(&draws, &spec)?;
    ensure_out_dir(&args.out_dir)?;
    let path = args
        .out_dir
        .join(format!("predictors_{}.csv", spec.label()));
    io::write_predictor_csv(&path, &table)?;
    wrote(&path);
    write_manifest(
        &args.out_dir,
        &format!("manifest_predict_{}.json", spec.label()),
        &[&args.fitted],
        None,
        None,
        None,
    )
}

fn parse_grid(family: LossFamily, grid: Option<&str>) -> Result<Vec<f64>> {
    let Some(text) = grid else {
        return default_grid(family);
    };
    let parts: Vec<&str> = text.split(':').collect();
    let parsed = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::InvalidParameter(format!("--grid value '{s}' is not a number")))
    };
    match parts.as_slice() {
        [list] => list.split(',').map(parsed).collect(),
        [min, max, step] => {
            let (min, max, step) = (parsed(min)?, parsed(max)?, parsed(step)?);
            // Negated comparison: a NaN step must fail this gate too.
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(step > 0.0) || max < min {
                return Err(Error::InvalidParameter(format!(
                    "--grid needs MIN <= MAX and STEP > 0, got {text}"
                )));
            }
            let count = ((max - min) / step + 1.0 + 1e-9).floor() as usize;
            Ok((0..count).map(|i| min + step * i as f64).collect())
        }
        _ => Err(Error::InvalidParameter(format!(
            "--grid expects MIN:MAX:STEP or comma-separated values, got '{text}'"
        ))),
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let family: LossFamily = args.loss.parse()?;
    if family == LossFamily::SquaredError {
        return Err(Error::InvalidParameter(
            "sweep varies an asymmetry parameter; use linex or pdl".into(),
        ));
    }
    let grid = parse_grid(family, args.grid.as_deref())?;
    let draws = io::read_fitted_csv(&args.fitted)?;
    let scale = parse_scale(&args.scale)?;
    let dataset = io::read_dataset(&args.data, &scale, None)?;
    if dataset.region_ids() != draws.region_ids() {
        return Err(Error::InvalidInput(
            "data regions do not match the fitted draws (same ids, same order, required)".into(),
        ));
    }
    let observed: Vec<f64> = dataset.z().iter().copied().collect();
    let curve = sweep(&draws, &observed, family, &grid)?;
    for w in &curve.warnings {
        eprintln!("warning: skipped lambda {}: {}", w.lambda, w.message);
    }
    if !curve.elbow_candidates.is_empty() {
        let lambdas: Vec<String> = curve
            .elbow_candidates
            .iter()
            .map(|&i| format!("{}", curve.rows[i].lambda))
            .collect();
        eprintln!("elbow candidates at lambda: {}", lambdas.join(", "));
    }
    ensure_out_dir(&args.out_dir)?;
    let path = args.out_dir.join(format!("sweep_{}.csv", family.as_str()));
    io::write_curve_csv(&path, &curve)?;
    wrote(&path);
    write_manifest(
        &args.out_dir,
        &format!("manifest_sweep_{}.json", family.as_str()),
        &[&args.fitted, &args.data],
        None,
        None,
        None,
    )
}

fn parse_true_loss(text: &str) -> Result<LossSpec> {
    match text.split_once(':') {
        None => parse_loss_spec(text, None, None),
        Some((family, lambda)) => {
            let lambda: f64 = lambda.trim().parse().map_err(|_| {
                Error::InvalidParameter(format!("true-loss lambda '{lambda}' is not a number"))
            })?;
            parse_loss_spec(family, Some(lambda), None)
        }
    }
}

fn cmd_risk(args: RiskArgs) -> Result<()> {
    let draws = io::read_fitted_csv(&args.fitted)?;
    let mut tables = Vec::with_capacity(args.predictors.len());
    for path in &args.predictors {
        tables.push(io::read_predictor_csv(path)?);
    }
    let mut labels: Vec<String> = tables.iter().map(|t| t.spec.label()).collect();
    labels.sort();
    if labels.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput(
            "two predictor tables share a loss label; pass each predictor once".into(),
        ));
    }
    let true_losses: Vec<LossSpec> = args
        .true_losses
        .iter()
        .map(|t| parse_true_loss(t))
        .collect::<Result<_>>()?;
    let matrix = risk_matrix(&draws, &tables, &true_losses)?;
    let summary = summarize(&matrix)?;
    ensure_out_dir(&args.out_dir)?;
    let long_path = args.out_dir.join("risk_rr.csv");
    io::write_risk_long_csv(&long_path, &matrix)?;
    wrote(&long_path);
    let summary_path = args.out_dir.join("risk_summary.csv");
    io::write_risk_summary_csv(&summary_path, &summary)?;
    wrote(&summary_path);
    let mut inputs: Vec<&Path> = vec![&args.fitted];
    inputs.extend(args.predictors.iter().map(PathBuf::as_path));
    write_manifest(
        &args.out_dir,
        "manifest_risk.json",
        &inputs,
        None,
        None,
        None,
    )
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let matrix = io::read_risk_long_csv(&args.risk_long)?;
    let rows = summarize(&matrix)?;
    ensure_out_dir(&args.out_dir)?;
    let path = args.out_dir.join("report.csv");
    io::write_report_csv(&path, &rows)?;
    wrote(&path);

    let mut current = String::new();
    for row in &rows {
        let loss = row.true_loss.label();
        if loss != current {
            println!("true loss {loss}: predictors by IQR of relative risk");
            current = loss;
        }
        println!(
            "  {:>2}. {:<16} iqr {:.6}  median rr {:.6}  (median rank {})",
            row.rank_by_iqr, row.predictor, row.iqr, row.median_rr, row.rank_by_median
        );
    }
    write_manifest(
        &args.out_dir,
        "manifest_report.json",
        &[&args.risk_long],
        None,
        None,
        None,
    )
}
