use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use utilearn::correlated::{GridSpec, SignRule};
use utilearn::estimation::{Method, NoiseKind};
use utilearn::game::SolverParams;
use utilearn::pipeline::{
    run_correlate, run_estimate, run_forecast, run_report, run_simulate, CorrelateConfig, EstimateConfig,
    ForecastPaths, SimulateConfig,
};
use utilearn::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "utilearn", version, about = "Learn player utilities from observed Nash play")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate equilibrium observations from a fully specified game.
    Simulate(SimulateArgs),
    /// Estimate utility coefficients from observations.
    Estimate(EstimateArgs),
    /// Grid-search correlated-game scalings around an ensemble estimate.
    Correlate(CorrelateArgs),
    /// Forecast held-out instances and score the forecast.
    Forecast(ForecastArgs),
    /// Compare cFGLS and all ensembles with a bias/variance table.
    Report(EstimateArgs),
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    /// Projected-gradient step size.
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
}

impl SolverArgs {
    fn params(&self) -> SolverParams {
        SolverParams {
            step: self.step,
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    game: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0.0)]
    sigma_obs: f64,
    #[arg(long, default_value_t = 1.0)]
    participation: f64,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[arg(long)]
    game: PathBuf,
    #[arg(long)]
    obs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// cols, cfgls, bagging, bumping or boosting.
    #[arg(long, default_value = "cfgls")]
    method: String,
    /// freedman, hc4 or spherical.
    #[arg(long, default_value = "freedman")]
    noise: String,
    #[arg(long, default_value_t = 200)]
    replicates: usize,
    #[arg(long, default_value_t = 0.1)]
    nu: f64,
    #[arg(long, default_value_t = 500)]
    mmax: usize,
    #[arg(long, default_value_t = 10)]
    cv_folds: usize,
    #[arg(long, default_value_t = 3)]
    max_outer: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct CorrelateArgs {
    /// Game file holding the basis and bounds of the estimated game.
    #[arg(long)]
    game: PathBuf,
    /// Estimate report with a covariance (bagging).
    #[arg(long)]
    estimate: PathBuf,
    /// Observations the grid cells are scored on.
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// e.g. "0,1=0.5,1,2;*=0.5:2:0.5"; unlisted pairs use 1.
    #[arg(long, default_value = "")]
    grid: String,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Coefficient index read from each player's theta (one value or one per player).
    #[arg(long, value_delimiter = ',', default_value = "0")]
    theta_coord: Vec<usize>,
    /// Keep positive weight for negatively correlated partners.
    #[arg(long)]
    all_positive: bool,
    #[arg(long)]
    no_normalize: bool,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct ForecastArgs {
    #[arg(long)]
    game: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Estimate report applied on top of the game file.
    #[arg(long)]
    estimate: Option<PathBuf>,
    /// Training observations for MASE and the constant-mean baseline.
    #[arg(long)]
    obs: Option<PathBuf>,
    /// Score this prediction CSV instead of forecasting.
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

fn estimate_config(a: &EstimateArgs, report: bool) -> Result<EstimateConfig> {
    let method: Method = if report { Method::Cfgls } else { a.method.parse()? };
    let noise: NoiseKind = a.noise.parse()?;
    let seed = match (a.seed, method) {
        (Some(s), _) => s,
        (None, Method::Cols) if !report => 0,
        (None, _) => return Err(Error::Usage(format!("--seed is required for method {method}"))),
    };
    Ok(EstimateConfig {
        method,
        noise,
        replicates: a.replicates,
        nu: a.nu,
        m_max: a.mmax,
        cv_folds: a.cv_folds,
        max_outer: a.max_outer,
        seed,
    })
}

fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    match cli.command {
        Command::Simulate(a) => {
            let seed = a.seed.ok_or_else(|| Error::Usage("--seed is required for simulate".into()))?;
            let cfg = SimulateConfig {
                n: a.n,
                sigma_obs: a.sigma_obs,
                participation: a.participation,
                seed,
                solver: a.solver.params(),
            };
            run_simulate(&a.game, &a.out, &cfg)
        }
        Command::Estimate(a) => run_estimate(&a.game, &a.obs, &a.out, &estimate_config(&a, false)?),
        Command::Report(a) => run_report(&a.game, &a.obs, &a.out, &estimate_config(&a, true)?),
        Command::Correlate(a) => {
            let cfg = CorrelateConfig {
                threshold: a.threshold,
                theta_coord: a.theta_coord,
                normalize: !a.no_normalize,
                sign_rule: if a.all_positive {
                    SignRule::AllPositive
                } else {
                    SignRule::CovarianceSign
                },
                grid: GridSpec::parse(&a.grid)?,
                solver: a.solver.params(),
            };
            run_correlate(&a.game, &a.estimate, &a.test, &a.out, &cfg)
        }
        Command::Forecast(a) => run_forecast(
            ForecastPaths {
                game: &a.game,
                test: &a.test,
                estimate: a.estimate.as_deref(),
                train: a.obs.as_deref(),
                predictions: a.predictions.as_deref(),
                out: &a.out,
            },
            &a.solver.params(),
        ),
    }
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    let body = serde_json::json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{body}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim(), 2),
    };
    match run(cli) {
        Ok(files) => {
            let names: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
            println!("{}", serde_json::json!({ "written": names }));
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.kind(), &e.to_string(), if e.is_usage() { 2 } else { 1 }),
    }
}
