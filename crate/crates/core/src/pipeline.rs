//! End-to-end workflows: simulate, estimate, correlate, forecast, report.
//!
//! Each `run_*` function validates its inputs, does all the work in memory
//! and only then writes its output files atomically.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::correlated::{
    build_correlated_game, grid_search_scalings, select_coalitions, CoalitionSpec, CovarianceView,
    GridResult, GridSpec, SignRule,
};
use crate::ensemble::{
    bagging, bumping, gradient_boost, refit_members, wild_bootstrap, BootstrapConfig, EnsembleOutput,
};
use crate::estimation::{
    assemble_system, solve_cfgls, solve_cols, theta_label, CfglsOptions, Entry, EstimatorResult,
    Method, NoiseKind, Observation, ObservationSet, RegressionSystem,
};
use crate::forecast::{
    bias_variance, constant_mean_forecast, forecast, score_forecast, BiasVarianceReport, Forecast,
    Prediction,
};
use crate::game::{solve_nash, SolverParams};
use crate::io::{
    self, bias_variance_csv, grid_csv, labeled, read_observations, read_predictions, write_observations,
    write_predictions, EnsembleReport, EstimateReport, GameModel, MetricsFile,
};
use crate::{Error, Result, FORMAT_VERSION};

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateConfig {
    pub n: usize,
    pub sigma_obs: f64,
    /// Probability that a player takes part in an observation.
    pub participation: f64,
    pub seed: u64,
    pub solver: SolverParams,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            n: 100,
            sigma_obs: 0.0,
            participation: 1.0,
            seed: 0,
            solver: SolverParams::default(),
        }
    }
}

/// Draws incentive weights, solves each instance and adds clamped noise.
pub fn simulate(model: &GameModel, cfg: &SimulateConfig) -> Result<ObservationSet> {
    if !model.fully_specified() {
        return Err(Error::Invalid("simulation needs every basis weight in the game file".into()));
    }
    if !(cfg.sigma_obs >= 0.0 && cfg.sigma_obs.is_finite()) {
        return Err(Error::Invalid(format!("sigma_obs = {} must be >= 0", cfg.sigma_obs)));
    }
    if !(cfg.participation > 0.0 && cfg.participation <= 1.0) {
        return Err(Error::Invalid(format!("participation = {} must lie in (0, 1]", cfg.participation)));
    }
    cfg.solver.validate()?;
    let game = &model.game;
    let p = game.len();
    let noise = Normal::new(0.0, cfg.sigma_obs.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::with_capacity(cfg.n);
    for k in 0..cfg.n {
        let weights: Vec<Vec<f64>> = (0..p)
            .map(|i| {
                game.players()[i]
                    .utility
                    .known()
                    .iter()
                    .zip(&model.incentive_ranges[i])
                    .map(|(t, r)| match r {
                        Some([a, b]) if b > a => rng.random_range(*a..=*b),
                        Some([a, _]) => *a,
                        None => t.weight,
                    })
                    .collect()
            })
            .collect();
        let mut players: Vec<usize> = (0..p)
            .filter(|_| cfg.participation >= 1.0 || rng.random_bool(cfg.participation))
            .collect();
        if players.is_empty() {
            players.push(rng.random_range(0..p));
        }
        let draft = Observation::new(
            k as u64,
            players
                .iter()
                .map(|&i| Entry::with_known_weights(i, 0.0, weights[i].clone()))
                .collect(),
        )?;
        let instance = draft.instance(game)?;
        let eq = solve_nash(&instance, &instance.default_start(), &cfg.solver)?;
        if !eq.converged {
            return Err(Error::NotConverged(format!(
                "instance {k} (players {players:?}, known weights {:?}) after {} iterations",
                players.iter().map(|&i| &weights[i]).collect::<Vec<_>>(),
                eq.iterations
            )));
        }
        let entries = players
            .iter()
            .zip(&eq.point)
            .map(|(&i, &x)| {
                let noisy = if cfg.sigma_obs > 0.0 { x + noise.sample(&mut rng) } else { x };
                let clamped = game.players()[i].constraints.project(noisy);
                if weights[i].is_empty() {
                    Entry::new(i, clamped)
                } else {
                    Entry::with_known_weights(i, clamped, weights[i].clone())
                }
            })
            .collect();
        records.push(Observation::new(k as u64, entries)?);
    }
    ObservationSet::new(records)
}

// ---------------------------------------------------------------- estimate

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateConfig {
    pub method: Method,
    pub noise: NoiseKind,
    pub replicates: usize,
    pub nu: f64,
    pub m_max: usize,
    pub cv_folds: usize,
    pub max_outer: usize,
    pub seed: u64,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            method: Method::Cfgls,
            noise: NoiseKind::Freedman,
            replicates: 200,
            nu: 0.1,
            m_max: 500,
            cv_folds: 10,
            max_outer: 3,
            seed: 0,
        }
    }
}

impl EstimateConfig {
    fn cfgls_options(&self) -> CfglsOptions {
        CfglsOptions {
            noise: self.noise,
            max_outer: self.max_outer,
            cv_folds: self.cv_folds,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cfgls_options().validate()?;
        if self.method == Method::Correlated {
            return Err(Error::Usage("use the correlate command for correlated games".into()));
        }
        if matches!(self.method, Method::Bagging | Method::Bumping) && self.replicates == 0 {
            return Err(Error::Invalid("replicates must be at least 1".into()));
        }
        if self.method == Method::Boosting {
            if !(self.nu > 0.0 && self.nu <= 1.0) {
                return Err(Error::Invalid(format!("nu = {} must lie in (0, 1]", self.nu)));
            }
            if self.m_max < 2 {
                return Err(Error::Invalid("mmax must be at least 2".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EstimateOutput {
    pub system: RegressionSystem,
    /// The cOLS or cFGLS fit the method builds on.
    pub base: EstimatorResult,
    pub ensemble: Option<EnsembleOutput>,
    pub beta: DVector<f64>,
    pub report: EstimateReport,
    pub estimated: GameModel,
}

/// Replaces every player's `theta` found among the labels.
pub fn apply_estimate(model: &GameModel, labels: &[String], beta: &DVector<f64>) -> Result<GameModel> {
    if labels.len() != beta.len() {
        return Err(Error::Dimension("estimate labels and values differ in length".into()));
    }
    let mut out = model.clone();
    for i in 0..model.len() {
        let u = &model.game.players()[i].utility;
        let found: Option<Vec<f64>> = (0..u.basis().len())
            .map(|j| {
                let l = theta_label(i, j);
                labels.iter().position(|x| *x == l).map(|k| beta[k])
            })
            .collect();
        if let Some(theta) = found {
            out = out.with_utility(i, u.with_theta(theta)?)?;
        }
    }
    Ok(out)
}

/// Plain wild-bootstrap member estimates around a cFGLS fit.
pub fn bootstrap_members(
    sys: &RegressionSystem,
    base: &EstimatorResult,
    noise: NoiseKind,
    replicates: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>> {
    let pseudo = wild_bootstrap(sys, &base.beta, &base.noise, &BootstrapConfig { replicates, seed })?;
    Ok(refit_members(sys, &pseudo, noise, base.diagnostics.outer_iterations.max(1))?
        .into_iter()
        .map(|f| f.beta)
        .collect())
}

pub fn estimate(model: &GameModel, obs: &ObservationSet, cfg: &EstimateConfig) -> Result<EstimateOutput> {
    cfg.validate()?;
    let sys = assemble_system(&model.game, &model.theta_bounds, obs)?;
    let base = match cfg.method {
        Method::Cols => solve_cols(&sys)?,
        _ => solve_cfgls(&sys, &cfg.cfgls_options())?,
    };
    let ensemble = match cfg.method {
        Method::Bagging => {
            let members = bootstrap_members(&sys, &base, cfg.noise, cfg.replicates, cfg.seed)?;
            Some(bagging(&members, &sys.feasible)?)
        }
        Method::Bumping => {
            let mut candidates = vec![base.beta.clone()];
            candidates.extend(bootstrap_members(&sys, &base, cfg.noise, cfg.replicates, cfg.seed)?);
            Some(bumping(&sys, &candidates)?)
        }
        Method::Boosting => Some(gradient_boost(&sys, cfg.nu, cfg.m_max, &base.beta)?),
        _ => None,
    };
    let beta = ensemble.as_ref().map_or_else(|| base.beta.clone(), |e| e.beta.clone());
    let labels = &sys.layout.labels;
    let mut report = EstimateReport::from_result(&sys.layout, &base, cfg.seed);
    report.method = cfg.method;
    report.noise = if cfg.method == Method::Cols { NoiseKind::Spherical } else { cfg.noise };
    if let Some(e) = &ensemble {
        report.beta = labeled(labels, &beta);
        report.objective = sys.residuals(&beta).norm();
        report.reference_cfgls = Some(labeled(labels, &base.beta));
        report.ensemble = Some(EnsembleReport::new(labels, e));
    }
    let estimated = apply_estimate(model, labels, &beta)?;
    Ok(EstimateOutput {
        system: sys,
        base,
        ensemble,
        beta,
        report,
        estimated,
    })
}

// ---------------------------------------------------------------- correlate

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelateConfig {
    pub threshold: f64,
    /// `theta` coordinate read per player; one entry applies to everyone.
    pub theta_coord: Vec<usize>,
    pub normalize: bool,
    pub sign_rule: SignRule,
    pub grid: GridSpec,
    pub solver: SolverParams,
}

impl Default for CorrelateConfig {
    fn default() -> Self {
        CorrelateConfig {
            threshold: 0.5,
            theta_coord: vec![0],
            normalize: true,
            sign_rule: SignRule::CovarianceSign,
            grid: GridSpec::default(),
            solver: SolverParams::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorrelateOutput {
    pub coalition: CoalitionSpec,
    pub grid: GridResult,
    pub base_equilibrium: Vec<f64>,
    pub game: GameModel,
}

fn theta_coords(cfg: &CorrelateConfig, p: usize) -> Result<Vec<usize>> {
    match cfg.theta_coord.len() {
        0 => Ok(vec![0; p]),
        1 => Ok(vec![cfg.theta_coord[0]; p]),
        n if n == p => Ok(cfg.theta_coord.clone()),
        n => Err(Error::Usage(format!("{n} theta coordinates for {p} players"))),
    }
}

pub fn correlate(
    model: &GameModel,
    est: &EstimateReport,
    eval: &ObservationSet,
    cfg: &CorrelateConfig,
) -> Result<CorrelateOutput> {
    let cov = est
        .covariance()
        .ok_or_else(|| Error::Usage("the estimate report has no covariance (use --method bagging)".into()))?
        .matrix()?;
    let labels = est.labels();
    let base = apply_estimate(model, &labels, &est.beta_vector())?;
    let p = base.len();
    let coords = theta_coords(cfg, p)?;
    for (i, &j) in coords.iter().enumerate() {
        if j >= base.game.players()[i].utility.basis().len() {
            return Err(Error::Usage(format!("player {i} has no theta coordinate {j}")));
        }
    }
    let view = CovarianceView::from_estimate(&cov, &labels, &coords, cfg.normalize)?;
    let coalition = select_coalitions(&view, cfg.threshold, cfg.sign_rule)?;
    let estimates: Vec<Vec<f64>> = base
        .game
        .players()
        .iter()
        .map(|pl| pl.utility.theta().to_vec())
        .collect();
    let eq = solve_nash(&base.game, &base.game.default_start(), &cfg.solver)?;
    let grid = grid_search_scalings(&base.game, &estimates, &coalition, &cfg.grid, eval, &cfg.solver, &eq.point)?;
    let best = grid
        .best_scalings()
        .ok_or_else(|| Error::NotConverged("every grid cell was flagged".into()))?;
    let chosen = coalition.with_scalings(&best)?;
    let game = base.with_game(build_correlated_game(&base.game, &estimates, &chosen)?)?;
    Ok(CorrelateOutput {
        coalition: chosen,
        grid,
        base_equilibrium: eq.point,
        game,
    })
}

// ---------------------------------------------------------------- forecast

/// Aligns externally produced predictions with the test set.
pub fn forecast_from_file(rows: &[(u64, usize, f64)], test: &ObservationSet) -> Result<Forecast> {
    let map: BTreeMap<(u64, usize), f64> = rows.iter().map(|&(o, i, v)| ((o, i), v)).collect();
    let predictions = test
        .records()
        .iter()
        .map(|o| {
            let actions = o
                .players()
                .iter()
                .map(|&i| {
                    map.get(&(o.id(), i)).copied().ok_or_else(|| {
                        Error::Invalid(format!("no prediction for observation {} player {i}", o.id()))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Prediction {
                obs_id: o.id(),
                players: o.players().to_vec(),
                converged: actions.iter().all(|v| v.is_finite()),
                actions,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n_failed = predictions.iter().filter(|p| !p.converged).count();
    Ok(Forecast { predictions, n_failed })
}

#[derive(Debug, Clone)]
pub struct ForecastOutput {
    pub forecast: Forecast,
    pub metrics: MetricsFile,
}

/// Forecasts `test` (unless predictions are supplied) and scores against
/// the training series and a constant-mean baseline when `train` is given.
pub fn forecast_and_score(
    model: &GameModel,
    test: &ObservationSet,
    train: Option<&ObservationSet>,
    supplied: Option<&[(u64, usize, f64)]>,
    solver: &SolverParams,
) -> Result<ForecastOutput> {
    let p = model.len();
    let fc = match supplied {
        Some(rows) => forecast_from_file(rows, test)?,
        None => forecast(&model.game, test, solver, None)?,
    };
    let naive = train.map(|t| t.player_series(p)).unwrap_or_default();
    let metrics = score_forecast(&fc, test, &naive)?;
    let baseline = match train {
        Some(t) => Some(score_forecast(&constant_mean_forecast(t, test, p), test, &naive)?),
        None => None,
    };
    Ok(ForecastOutput {
        metrics: MetricsFile::new(&metrics, baseline),
        forecast: fc,
    })
}

// ---------------------------------------------------------------- report

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodEstimates {
    pub format_version: u32,
    pub labels: Vec<String>,
    pub cfgls: Vec<f64>,
    pub bagging: Vec<f64>,
    pub bumping: Vec<f64>,
    pub boosting: Vec<f64>,
    pub bumping_index: usize,
    pub boosting_steps: usize,
    pub outer_iterations: usize,
    pub replicates: usize,
    pub bias_variance: BiasVarianceReport,
}

/// cFGLS plus all three ensembles on a shared bootstrap, and the
/// bias/variance table around the cFGLS estimate.
pub fn report(model: &GameModel, obs: &ObservationSet, cfg: &EstimateConfig) -> Result<MethodEstimates> {
    let cfg = EstimateConfig {
        method: Method::Cfgls,
        ..cfg.clone()
    };
    cfg.validate()?;
    if cfg.replicates == 0 {
        return Err(Error::Invalid("replicates must be at least 1".into()));
    }
    let sys = assemble_system(&model.game, &model.theta_bounds, obs)?;
    let base = solve_cfgls(&sys, &cfg.cfgls_options())?;
    let members = bootstrap_members(&sys, &base, cfg.noise, cfg.replicates, cfg.seed)?;
    let bag = bagging(&members, &sys.feasible)?;
    let mut candidates = vec![base.beta.clone()];
    candidates.extend(members.iter().cloned());
    let bump = bumping(&sys, &candidates)?;
    let boost = gradient_boost(&sys, cfg.nu, cfg.m_max, &base.beta)?;
    let bv = bias_variance(
        &members,
        &[
            ("bagging".into(), bag.beta.clone()),
            ("bumping".into(), bump.beta.clone()),
            ("boosting".into(), boost.beta.clone()),
        ],
        &base.beta,
    )?;
    let vec = |v: &DVector<f64>| v.iter().copied().collect::<Vec<_>>();
    Ok(MethodEstimates {
        format_version: FORMAT_VERSION,
        labels: sys.layout.labels.clone(),
        cfgls: vec(&base.beta),
        bagging: vec(&bag.beta),
        bumping: vec(&bump.beta),
        boosting: vec(&boost.beta),
        bumping_index: bump.selection_index.unwrap_or(0),
        boosting_steps: boost.aic_trace.as_ref().map_or(0, |t| t.m_hat),
        outer_iterations: base.diagnostics.outer_iterations,
        replicates: cfg.replicates,
        bias_variance: bv,
    })
}

// ---------------------------------------------------------------- file-level commands

fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn check_inputs(paths: &[&Path]) -> Result<()> {
    paths.iter().try_for_each(|p| io::require_file(p))
}

pub fn run_simulate(game: &Path, out: &Path, cfg: &SimulateConfig) -> Result<Vec<PathBuf>> {
    check_inputs(&[game])?;
    let model = GameModel::load(game)?;
    let obs = simulate(&model, cfg)?;
    let files = vec![
        (out_path(out, "observations.csv"), write_observations(&obs)?),
        (out_path(out, "truth_game.json"), model.to_json()?),
    ];
    finish(files)
}

pub fn run_estimate(game: &Path, obs: &Path, out: &Path, cfg: &EstimateConfig) -> Result<Vec<PathBuf>> {
    check_inputs(&[game, obs])?;
    cfg.validate()?;
    let model = GameModel::load(game)?;
    let data = read_observations(obs)?;
    let res = estimate(&model, &data, cfg)?;
    finish(vec![
        (out_path(out, "estimate.json"), io::to_json(&res.report)?),
        (out_path(out, "estimated_game.json"), res.estimated.to_json()?),
    ])
}

pub fn run_correlate(
    game: &Path,
    estimate: &Path,
    test: &Path,
    out: &Path,
    cfg: &CorrelateConfig,
) -> Result<Vec<PathBuf>> {
    check_inputs(&[game, estimate, test])?;
    let model = GameModel::load(game)?;
    let est = EstimateReport::load(estimate)?;
    let eval = read_observations(test)?;
    let res = correlate(&model, &est, &eval, cfg)?;
    #[derive(Serialize)]
    struct CoalitionFile<'a> {
        format_version: u32,
        coalitions: &'a CoalitionSpec,
        base_equilibrium: &'a [f64],
        best_cell: Option<usize>,
    }
    let coalitions = io::to_json(&CoalitionFile {
        format_version: FORMAT_VERSION,
        coalitions: &res.coalition,
        base_equilibrium: &res.base_equilibrium,
        best_cell: res.grid.best,
    })?;
    finish(vec![
        (out_path(out, "grid.csv"), grid_csv(&res.grid, model.len())?),
        (out_path(out, "correlated_game.json"), res.game.to_json()?),
        (out_path(out, "coalitions.json"), coalitions),
    ])
}

#[derive(Debug, Clone, Copy)]
pub struct ForecastPaths<'a> {
    pub game: &'a Path,
    pub test: &'a Path,
    /// Estimate report whose coefficients replace those in the game file.
    pub estimate: Option<&'a Path>,
    /// Training observations for MASE and the constant-mean baseline.
    pub train: Option<&'a Path>,
    /// Externally produced predictions to score instead of forecasting.
    pub predictions: Option<&'a Path>,
    pub out: &'a Path,
}

pub fn run_forecast(paths: ForecastPaths<'_>, solver: &SolverParams) -> Result<Vec<PathBuf>> {
    let ForecastPaths {
        game,
        test,
        estimate,
        train,
        predictions,
        out,
    } = paths;
    let mut inputs = vec![game, test];
    inputs.extend(estimate);
    inputs.extend(train);
    inputs.extend(predictions);
    check_inputs(&inputs)?;
    let mut model = GameModel::load(game)?;
    if let Some(e) = estimate {
        let est = EstimateReport::load(e)?;
        model = apply_estimate(&model, &est.labels(), &est.beta_vector())?;
    }
    let test_obs = read_observations(test)?;
    let train_obs = train.map(read_observations).transpose()?;
    let supplied = predictions.map(read_predictions).transpose()?;
    let res = forecast_and_score(&model, &test_obs, train_obs.as_ref(), supplied.as_deref(), solver)?;
    finish(vec![
        (out_path(out, "metrics.json"), io::to_json(&res.metrics)?),
        (out_path(out, "predictions.csv"), write_predictions(&res.forecast, &test_obs)?),
    ])
}

pub fn run_report(game: &Path, obs: &Path, out: &Path, cfg: &EstimateConfig) -> Result<Vec<PathBuf>> {
    check_inputs(&[game, obs])?;
    let model = GameModel::load(game)?;
    let data = read_observations(obs)?;
    let rep = report(&model, &data, cfg)?;
    finish(vec![
        (out_path(out, "bias_variance.csv"), bias_variance_csv(&rep.labels, &rep.bias_variance)?),
        (out_path(out, "report.json"), io::to_json(&rep)?),
    ])
}

fn finish(files: Vec<(PathBuf, String)>) -> Result<Vec<PathBuf>> {
    io::write_all_atomic(&files)?;
    Ok(files.into_iter().map(|f| f.0).collect())
}
