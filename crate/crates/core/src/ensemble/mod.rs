//! Wild-bootstrap ensembles: bagging, bumping and L2 gradient boosting.

mod bagging;
mod boosting;
mod bootstrap;

use nalgebra::{DMatrix, DVector};

pub use bagging::{bagging, bumping, training_errors};
pub use boosting::{aic_trace, boost_iterate, gradient_boost, AicEntry, AicStatus, AicTrace};
pub use bootstrap::{pseudo_observation, refit_members, standard_normal, wild_bootstrap, BootstrapConfig};

use crate::estimation::Method;

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOutput {
    pub method: Method,
    /// Final estimate, projected onto the feasible set.
    pub beta: DVector<f64>,
    /// The combined estimate before projection.
    pub beta_unprojected: DVector<f64>,
    pub member_estimates: Vec<DVector<f64>>,
    /// Empirical member covariance (bagging only).
    pub covariance: Option<DMatrix<f64>>,
    /// Chosen member (bumping only).
    pub selection_index: Option<usize>,
    /// Training error of each candidate (bumping only).
    pub training_errors: Vec<f64>,
    pub aic_trace: Option<AicTrace>,
    /// `||e||` before the first and after every Stage-2 step (boosting only).
    pub residual_norms: Vec<f64>,
}

impl EnsembleOutput {
    fn new(method: Method, beta_unprojected: DVector<f64>, beta: DVector<f64>) -> Self {
        EnsembleOutput {
            method,
            beta,
            beta_unprojected,
            member_estimates: Vec::new(),
            covariance: None,
            selection_index: None,
            training_errors: Vec::new(),
            aic_trace: None,
            residual_norms: Vec::new(),
        }
    }
}
