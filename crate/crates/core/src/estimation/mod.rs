//! Inverse-optimization regression: assembly, constrained least squares,
//! noise estimation and iterated feasible GLS.

mod cfgls;
mod noise;
mod observations;
mod qp;
mod system;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use cfgls::{cfgls_fixed, cfgls_path, cv_folds, solve_cfgls, CfglsOptions, CV_STREAM};
pub use noise::{
    estimate_noise, estimate_noise_freedman, estimate_noise_hc4, estimate_noise_spherical,
    hc4_exponents, whiten, CovBlock, NoiseKind, NoiseModel, LEVERAGE_CAP, PD_FLOOR,
};
pub use observations::{Entry, Observation, ObservationSet};
pub use qp::{solve_box_lsq, QpSolution, KKT_TOL};
pub use system::{
    assemble_system, mu_label, theta_label, FeasibleSet, Layout, PlayerBlock, RegressionSystem,
    ThetaBound,
};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cols,
    Cfgls,
    Bagging,
    Bumping,
    Boosting,
    Correlated,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Cols => "cols",
            Method::Cfgls => "cfgls",
            Method::Bagging => "bagging",
            Method::Bumping => "bumping",
            Method::Boosting => "boosting",
            Method::Correlated => "correlated",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cols" => Ok(Method::Cols),
            "cfgls" => Ok(Method::Cfgls),
            "bagging" => Ok(Method::Bagging),
            "bumping" => Ok(Method::Bumping),
            "boosting" => Ok(Method::Boosting),
            other => Err(Error::Usage(format!(
                "unknown method '{other}' (expected cols, cfgls, bagging, bumping or boosting)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    pub ridge_used: bool,
    pub qp_iterations: usize,
    pub kkt_residual: f64,
    /// Selected number of cFGLS outer iterations `t*`.
    pub outer_iterations: usize,
    /// Held-out score for each `t = 1..=max_outer` (empty when CV was skipped).
    pub cv_scores: Vec<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorResult {
    pub method: Method,
    pub beta: DVector<f64>,
    pub residuals: DVector<f64>,
    pub noise: NoiseModel,
    /// `||Y - X beta||_2` on the original (unwhitened) system.
    pub objective: f64,
    pub diagnostics: Diagnostics,
}

/// Constrained OLS.
pub fn solve_cols(sys: &RegressionSystem) -> Result<EstimatorResult> {
    let sol = solve_box_lsq(&sys.x, &sys.y, &sys.feasible)?;
    check_kkt(&sol)?;
    let residuals = sys.residuals(&sol.beta);
    let noise = estimate_noise_spherical(sys, &residuals)?;
    Ok(EstimatorResult {
        method: Method::Cols,
        objective: residuals.norm(),
        residuals,
        noise,
        diagnostics: Diagnostics {
            ridge_used: sol.ridge_used,
            qp_iterations: sol.iterations,
            kkt_residual: sol.kkt_residual,
            outer_iterations: 0,
            cv_scores: Vec::new(),
            warnings: sys.warnings.clone(),
        },
        beta: sol.beta,
    })
}

/// Constrained GLS with a given covariance.
pub fn solve_gls(sys: &RegressionSystem, noise: &NoiseModel) -> Result<EstimatorResult> {
    let w = whiten(sys, noise)?;
    let sol = solve_box_lsq(&w.x, &w.y, &w.feasible)?;
    check_kkt(&sol)?;
    let residuals = sys.residuals(&sol.beta);
    Ok(EstimatorResult {
        method: Method::Cfgls,
        objective: residuals.norm(),
        residuals,
        noise: noise.clone(),
        diagnostics: Diagnostics {
            ridge_used: sol.ridge_used,
            qp_iterations: sol.iterations,
            kkt_residual: sol.kkt_residual,
            outer_iterations: 1,
            cv_scores: Vec::new(),
            warnings: sys.warnings.clone(),
        },
        beta: sol.beta,
    })
}

fn check_kkt(sol: &QpSolution) -> Result<()> {
    if sol.kkt_residual > KKT_TOL {
        return Err(Error::NotConverged(format!(
            "constrained least squares stopped with KKT residual {:.3e}",
            sol.kkt_residual
        )));
    }
    Ok(())
}
