//! Equilibrium forecasts for held-out contexts, error metrics and
//! bias/variance summaries of bootstrap distributions.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::estimation::{Observation, ObservationSet};
use crate::game::{solve_nash, Game, SolverParams};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub obs_id: u64,
    pub players: Vec<usize>,
    /// Predicted actions aligned with `players`.
    pub actions: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Forecast {
    pub predictions: Vec<Prediction>,
    pub n_failed: usize,
}

/// Solves the game actually played at `obs`: participants only, with the
/// recorded known-part weights. The warm start is `start` restricted to the
/// participants when given, else the midpoint of each player's bounds.
pub fn forecast_one(
    game: &Game,
    obs: &Observation,
    params: &SolverParams,
    start: Option<&[f64]>,
) -> Result<Prediction> {
    let instance = obs.instance(game)?;
    let x0 = match start {
        Some(full) => {
            if full.len() != game.len() {
                return Err(Error::Dimension(format!(
                    "warm start of length {} for a {}-player game",
                    full.len(),
                    game.len()
                )));
            }
            obs.players().iter().map(|&i| full[i]).collect()
        }
        None => instance.default_start(),
    };
    let report = solve_nash(&instance, &x0, params)?;
    Ok(Prediction {
        obs_id: obs.id(),
        players: obs.players().to_vec(),
        actions: report.point,
        converged: report.converged,
    })
}

/// One equilibrium prediction per test observation, in test order.
/// Solver failures are kept as non-converged predictions.
pub fn forecast(game: &Game, test: &ObservationSet, params: &SolverParams, start: Option<&[f64]>) -> Result<Forecast> {
    test.validate(game)?;
    let predictions = test
        .records()
        .par_iter()
        .map(|obs| match forecast_one(game, obs, params, start) {
            Ok(p) => Ok(p),
            Err(Error::Numerical(_)) | Err(Error::Domain(_)) => Ok(Prediction {
                obs_id: obs.id(),
                players: obs.players().to_vec(),
                actions: vec![f64::NAN; obs.players().len()],
                converged: false,
            }),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    let n_failed = predictions.iter().filter(|p| !p.converged).count();
    Ok(Forecast {
        predictions,
        n_failed,
    })
}

/// Predicts each participant's training-mean action (the pooled mean for
/// players never seen in training).
pub fn constant_mean_forecast(train: &ObservationSet, test: &ObservationSet, p: usize) -> Forecast {
    let series = train.player_series(p);
    let all: Vec<f64> = series.iter().flatten().copied().collect();
    let pooled = if all.is_empty() {
        0.0
    } else {
        all.iter().sum::<f64>() / all.len() as f64
    };
    let means: Vec<f64> = series
        .iter()
        .map(|s| {
            if s.is_empty() {
                pooled
            } else {
                s.iter().sum::<f64>() / s.len() as f64
            }
        })
        .collect();
    Forecast {
        predictions: test
            .records()
            .iter()
            .map(|o| Prediction {
                obs_id: o.id(),
                players: o.players().to_vec(),
                actions: o
                    .players()
                    .iter()
                    .map(|&i| means.get(i).copied().unwrap_or(pooled))
                    .collect(),
                converged: true,
            })
            .collect(),
        n_failed: 0,
    }
}

/// Pooled error metrics; `None` marks an undefined value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
    pub mase: Option<f64>,
    pub n_test: usize,
    pub n_failed: usize,
    /// Number of pooled player-components.
    pub n_errors: usize,
    pub mean_error: Option<f64>,
}

/// Mean absolute one-step change of each training series, pooled over players.
pub fn naive_scale(series: &[Vec<f64>]) -> Option<f64> {
    let (mut sum, mut count) = (0.0, 0usize);
    for s in series {
        for w in s.windows(2) {
            sum += (w[1] - w[0]).abs();
            count += 1;
        }
    }
    (count > 0 && sum > 0.0).then(|| sum / count as f64)
}

/// Metrics of pooled errors `prediction - actual`.
pub fn score(predictions: &[f64], actuals: &[f64], naive_reference: &[Vec<f64>]) -> Result<MetricsReport> {
    if predictions.len() != actuals.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} actuals",
            predictions.len(),
            actuals.len()
        )));
    }
    let errors: Vec<f64> = predictions.iter().zip(actuals).map(|(p, a)| p - a).collect();
    let n = errors.len();
    let mean = |f: &dyn Fn(f64) -> f64| (n > 0).then(|| errors.iter().map(|&e| f(e)).sum::<f64>() / n as f64);
    let mae = mean(&|e: f64| e.abs());
    let mase = match (mae, naive_scale(naive_reference)) {
        (Some(m), Some(d)) => Some(m / d),
        _ => None,
    };
    Ok(MetricsReport {
        rmse: mean(&|e: f64| e * e).map(f64::sqrt),
        mae,
        mase,
        n_test: n,
        n_failed: 0,
        n_errors: n,
        mean_error: mean(&|e: f64| e),
    })
}

/// Scores a forecast against its test set, skipping failed predictions.
pub fn score_forecast(fc: &Forecast, test: &ObservationSet, naive_reference: &[Vec<f64>]) -> Result<MetricsReport> {
    if fc.predictions.len() != test.len() {
        return Err(Error::Dimension("forecast and test set differ in length".into()));
    }
    let (mut pred, mut act) = (Vec::new(), Vec::new());
    for (p, o) in fc.predictions.iter().zip(test.records()) {
        if p.obs_id != o.id() || p.players != o.players() {
            return Err(Error::Invalid(format!("prediction for observation {} is misaligned", o.id())));
        }
        if !p.converged {
            continue;
        }
        pred.extend_from_slice(&p.actions);
        act.extend_from_slice(o.actions());
    }
    let mut m = score(&pred, &act, naive_reference)?;
    m.n_test = test.len();
    m.n_failed = fc.n_failed;
    Ok(m)
}

/// Per-coefficient bootstrap summary around a reference estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasVarianceReport {
    pub reference: Vec<f64>,
    /// `1/N` sample variance of the members.
    pub variance: Vec<f64>,
    /// `mean(members) - reference`.
    pub bootstrap_bias: Vec<f64>,
    /// `estimate - reference` for each named method.
    pub method_bias: Vec<(String, Vec<f64>)>,
}

pub fn bias_variance(
    members: &[DVector<f64>],
    methods: &[(String, DVector<f64>)],
    reference: &DVector<f64>,
) -> Result<BiasVarianceReport> {
    let c = reference.len();
    if members.is_empty() {
        return Err(Error::Empty("no bootstrap members".into()));
    }
    if members.iter().chain(methods.iter().map(|m| &m.1)).any(|m| m.len() != c) {
        return Err(Error::Dimension("estimates differ in length".into()));
    }
    let n = members.len() as f64;
    let mean = members.iter().fold(DVector::zeros(c), |acc, m| acc + m) / n;
    let variance = (0..c)
        .map(|j| members.iter().map(|m| (m[j] - mean[j]).powi(2)).sum::<f64>() / n)
        .collect();
    Ok(BiasVarianceReport {
        reference: reference.iter().copied().collect(),
        variance,
        bootstrap_bias: (&mean - reference).iter().copied().collect(),
        method_bias: methods
            .iter()
            .map(|(name, b)| (name.clone(), (b - reference).iter().copied().collect()))
            .collect(),
    })
}

/// `mean_j (m_j - target)^2` per coefficient.
pub fn mse_about(members: &[DVector<f64>], target: &DVector<f64>) -> Vec<f64> {
    let n = members.len().max(1) as f64;
    (0..target.len())
        .map(|j| members.iter().map(|m| (m[j] - target[j]).powi(2)).sum::<f64>() / n)
        .collect()
}
