//! Command-line frontend: `forecast`, `backtest`, `sweep` and `verify`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure
//! (no feasible subspace, ill-conditioning, or a failed verification check).

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn, LevelFilter};
use serde::Serialize;

use crate::backtest::{run_backtest, select_l, BacktestReport, ObjectiveKind, SelectionObjective, SweepConfig};
use crate::covariance::empirical_covariance;
use crate::error::{Error, Result};
use crate::estimators::{fit_gauss_bayes, fit_reduced_dimension_with, fit_unconditional, Estimator, Method};
use crate::metrics::volatility;
use crate::pipeline::{
    build_hankel, denormalize_forecast, load_csv, normalize_and_center, prepare_observation, WindowConfig,
};
use crate::report::emit_report;
use crate::verify::{run_verify, Fault, VerifyConfig};

pub const LOG_ENV: &str = "SUBSPACE_FORECAST_LOG";

#[derive(Debug, Parser)]
#[command(name = "subspace-forecast", version, about = "Linear-Gaussian price forecasting with subspace conditioning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Forecast the next H prices from the last M.
    Forecast(ForecastArgs),
    /// Out-of-sample evaluation for one observation length.
    Backtest(BacktestArgs),
    /// Out-of-sample evaluation over several observation lengths.
    Sweep(SweepArgs),
    /// Check closed-form quantities against Monte-Carlo draws.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum QRule {
    /// Normalize by the last observed price.
    M,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum MethodArg {
    Unc,
    Gb,
    Rd,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Unc => Method::Unconditional,
            MethodArg::Gb => Method::GaussBayes,
            MethodArg::Rd => Method::ReducedDimension,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum ObjectiveArg {
    /// Closed-form RD MSE under the training covariance.
    Theoretical,
    /// Empirical RD MSE on a held-back slice of the training rows.
    Validation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FaultArg {
    ZeroGb,
}

#[derive(Debug, Args, Serialize)]
pub struct DataArgs {
    /// Price file with `date,close` rows.
    #[arg(long)]
    pub csv: PathBuf,
    /// Forecast horizon in days.
    #[arg(long, default_value_t = 10)]
    pub h: usize,
    /// Normalization day rule.
    #[arg(long, value_enum, default_value_t = QRule::M)]
    pub q_rule: QRule,
}

#[derive(Debug, Args, Serialize)]
pub struct ForecastArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Observation length in days.
    #[arg(long)]
    pub m: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Rd)]
    pub method: MethodArg,
    /// Upper limit on cond(Σ_ww) for RD.
    #[arg(long, default_value_t = 1e4)]
    pub cap: f64,
    /// Pin the RD subspace size instead of selecting it.
    #[arg(long)]
    pub l: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Upper limits on cond(Σ_ww), one RD fit each.
    #[arg(long, num_args = 1.., default_values_t = [1e3, 1e4])]
    pub caps: Vec<f64>,
    /// Number of trailing windows held out for testing.
    #[arg(long, default_value_t = 2200)]
    pub n_test: usize,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Theoretical)]
    pub objective: ObjectiveArg,
    /// Share of training rows held back by the validation objective.
    #[arg(long, default_value_t = 0.2)]
    pub validation_fraction: f64,
    /// Directory for the CSV and JSON artifacts.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct BacktestArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub m: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub eval: EvalArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Observation lengths; defaults to 20, 50, ..., 440.
    #[arg(long, num_args = 1..)]
    pub m_list: Option<Vec<usize>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub eval: EvalArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Integer seed, or any string (hashed).
    #[arg(long, default_value = "2024")]
    pub seed: String,
    /// Monte-Carlo draws per check.
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    #[arg(long, hide = true, value_enum)]
    pub inject_fault: Option<FaultArg>,
}

/// Numeric seeds are used as given; anything else is hashed (FNV-1a).
pub fn parse_seed(token: &str) -> u64 {
    token.parse().unwrap_or_else(|_| {
        token
            .bytes()
            .fold(0xcbf2_9ce4_8422_2325_u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
    })
}

fn init_logging() {
    let level = match std::env::var(LOG_ENV).as_deref() {
        Ok("quiet") => LevelFilter::Error,
        Ok("debug") => LevelFilter::Debug,
        _ => LevelFilter::Info,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Parses `args` (including the program name), runs the command, and returns
/// the exit code. Output goes to stdout.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    run_with_output(args, &mut stdout.lock())
}

pub fn run_with_output<I, T, W>(args: I, out: &mut W) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
    W: Write,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    init_logging();
    match run(cli, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run<W: Write>(cli: Cli, out: &mut W) -> Result<i32> {
    match cli.command {
        Command::Forecast(args) => forecast(&args, out).map(|()| 0),
        Command::Backtest(args) => {
            let sweep = sweep_config(vec![args.m], args.data.h, &args.eval)?;
            log_config("backtest", &args);
            evaluate(&args.data, &args.eval, &sweep, out).map(|()| 0)
        }
        Command::Sweep(args) => {
            let m_values = args.m_list.clone().unwrap_or_else(SweepConfig::default_m_values);
            let sweep = sweep_config(m_values, args.data.h, &args.eval)?;
            log_config("sweep", &args);
            info!("m_values = {:?}", sweep.m_values);
            evaluate(&args.data, &args.eval, &sweep, out).map(|()| 0)
        }
        Command::Verify(args) => verify(&args, out),
    }
}

fn log_config<T: Serialize>(command: &str, args: &T) {
    let json = serde_json::to_string(args).unwrap_or_default();
    info!("{command} config {json}");
}

fn sweep_config(m_values: Vec<usize>, horizon: usize, eval: &EvalArgs) -> Result<SweepConfig> {
    let objective = match eval.objective {
        ObjectiveArg::Theoretical => ObjectiveKind::TheoreticalRdMse,
        ObjectiveArg::Validation => ObjectiveKind::ValidationMse {
            fraction: eval.validation_fraction,
        },
    };
    let sweep = SweepConfig {
        m_values,
        horizon,
        caps: eval.caps.clone(),
        n_test: eval.n_test,
        objective,
    };
    sweep.validate()?;
    Ok(sweep)
}

fn io(e: std::io::Error) -> Error {
    Error::Io(e)
}

fn evaluate<W: Write>(data: &DataArgs, eval: &EvalArgs, sweep: &SweepConfig, out: &mut W) -> Result<()> {
    let ticker = data
        .csv
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let series = load_csv(&data.csv, &ticker)?;
    info!("loaded {} prices for {}", series.len(), ticker);
    let report = run_backtest(&series, sweep)?;
    print_summary(&report, out).map_err(io)?;
    for s in &report.skipped {
        warn!("skipped M={} cap={:?}: {}", s.m, s.cap, s.reason);
    }
    if let Some(dir) = &eval.out {
        let files = emit_report(&report, dir)?;
        info!("wrote {} files to {}", files.len(), dir.display());
    }
    Ok(())
}

fn print_summary<W: Write>(report: &BacktestReport, out: &mut W) -> std::io::Result<()> {
    for c in &report.cells {
        let mse = |m| {
            c.method(m)
                .and_then(|r| r.mse.empirical_mse)
                .map(|v| format!("{v:.6e}"))
                .unwrap_or_else(|| "-".into())
        };
        writeln!(
            out,
            "M={} cap={:e} L={} cond_yy={:.3e} cond_ww={:.3e} mse_unc={} mse_gb={} mse_rd={}",
            c.m,
            c.cap,
            c.best_l,
            c.cond_yy,
            c.cond_ww,
            mse(Method::Unconditional),
            mse(Method::GaussBayes),
            mse(Method::ReducedDimension)
        )?;
    }
    for s in &report.skipped {
        match s.cap {
            Some(cap) => writeln!(out, "M={} cap={:e} skipped: {}", s.m, cap, s.reason)?,
            None => writeln!(out, "M={} skipped: {}", s.m, s.reason)?,
        }
    }
    Ok(())
}

/// Point forecast and per-day standard deviation, both in price units.
#[derive(Debug, Clone)]
pub struct Forecast {
    pub method: Method,
    pub prices: Vec<f64>,
    pub std: Vec<f64>,
    pub subspace_dim: Option<usize>,
    pub condition: Option<f64>,
}

/// Fits on every window of the series and forecasts from its last `m` prices.
pub fn compute_forecast(args: &ForecastArgs) -> Result<Forecast> {
    let ticker = args
        .data
        .csv
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let series = load_csv(&args.data.csv, &ticker)?;
    let config = WindowConfig::with_horizon(args.m, args.data.h)?;
    let required = config.window() + 1;
    if series.len() < required {
        return Err(Error::InsufficientData {
            required,
            available: series.len(),
        });
    }
    let rows = series.len() - config.window() + 1;
    let x = normalize_and_center(&build_hankel(series.prices(), config.window(), rows)?, config)?;
    let model = empirical_covariance(&x)?;
    let method = Method::from(args.method);
    let est: Estimator = match method {
        Method::Unconditional => fit_unconditional(&model),
        Method::GaussBayes => fit_gauss_bayes(&model)?,
        Method::ReducedDimension => match args.l {
            Some(l) => {
                let (est, proj) = fit_reduced_dimension_with(&model, l)?;
                if proj.condition() > args.cap {
                    return Err(Error::NoFeasibleSubspace {
                        cap: args.cap,
                        min_condition: proj.condition(),
                    });
                }
                est
            }
            None => select_l(&model, args.cap, SelectionObjective::TheoreticalRdMse)?.estimator,
        },
    };
    let last = &series.prices()[series.len() - args.m..];
    let (y, scale) = prepare_observation(last, &config, x.mean())?;
    let prices = denormalize_forecast(&est.predict(&y)?, x.mean(), scale)?;
    Ok(Forecast {
        method,
        prices: prices.iter().copied().collect(),
        std: volatility(&est).iter().map(|s| s * scale).collect(),
        subspace_dim: est.diagnostics().subspace_dim,
        condition: est.diagnostics().condition,
    })
}

fn forecast<W: Write>(args: &ForecastArgs, out: &mut W) -> Result<()> {
    log_config("forecast", args);
    let f = compute_forecast(args)?;
    let mut write = || -> std::io::Result<()> {
        if f.method == Method::ReducedDimension {
            writeln!(
                out,
                "# RD L={} cond_ww={:e}",
                f.subspace_dim.unwrap_or(0),
                f.condition.unwrap_or(f64::NAN)
            )?;
        }
        writeln!(out, "day,forecast,std")?;
        for (j, (p, s)) in f.prices.iter().zip(&f.std).enumerate() {
            writeln!(out, "{},{},{}", j + 1, p, s)?;
        }
        Ok(())
    };
    write().map_err(io)
}

fn verify<W: Write>(args: &VerifyArgs, out: &mut W) -> Result<i32> {
    let config = VerifyConfig {
        seed: parse_seed(&args.seed),
        n: args.n,
        fault: args.inject_fault.map(|FaultArg::ZeroGb| Fault::ZeroGaussBayes),
        ..VerifyConfig::default()
    };
    info!(
        "verify config seed={} n={} levels={:?} fault={:?}",
        config.seed, config.n, config.levels, config.fault
    );
    let report = run_verify(&config)?;
    writeln!(out, "{report}").map_err(io)?;
    Ok(if report.passed() { 0 } else { 3 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds() {
        assert_eq!(parse_seed("42"), 42);
        assert_eq!(parse_seed("abc"), parse_seed("abc"));
        assert_ne!(parse_seed("abc"), parse_seed("abd"));
    }

    #[test]
    fn usage_errors_exit_one() {
        let mut out = Vec::new();
        assert_eq!(run_with_output(["sf", "forecast"], &mut out), 1);
        assert_eq!(run_with_output(["sf", "bogus"], &mut out), 1);
        assert_eq!(run_with_output(["sf", "--help"], &mut out), 0);
    }

    #[test]
    fn missing_file_exits_two() {
        let mut out = Vec::new();
        let code = run_with_output(["sf", "forecast", "--csv", "/nonexistent/x.csv", "--m", "5"], &mut out);
        assert_eq!(code, 2);
    }
}
