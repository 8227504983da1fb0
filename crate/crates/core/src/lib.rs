//! Utility learning for constrained concave games.
//!
//! Agents' utilities are parameterized as `f_i(x) = <phi_i(x), theta_i> + s_i * fbar_i(x)`
//! where `fbar_i` is a known (e.g. planner-designed incentive) component. Observed play is
//! treated as approximate Nash equilibria; the KKT conditions of every observation are
//! stacked into a linear regression `Y = X beta + eps` over the multipliers and `theta`,
//! which is fitted by box-constrained least squares and refined with feasible GLS,
//! wild-bootstrap ensembles and L2 boosting. Estimated games are solved by projected
//! gradient play to forecast held-out actions.
//!
//! Module map:
//!
//! - [`game`]: basis functions, utilities, constraint sets, Nash solver and checks.
//! - [`estimation`]: observations, regression assembly, cOLS, noise models, cFGLS.
//! - [`ensemble`]: wild bootstrap, bagging, bumping, gradient boosting.
//! - [`correlated`]: covariance-driven pseudo-coalitions and scaling grid search.
//! - [`forecast`]: equilibrium forecasts, error metrics, bias/variance tables.
//! - [`io`]: game files, observation CSV, reports.
//! - [`pipeline`]: end-to-end workflows used by the command-line tool.



pub mod correlated;
pub mod ensemble;
pub mod error;
pub mod estimation;

pub mod forecast;
pub mod game;
pub mod io;

pub mod linalg;
pub mod pipeline;


pub use error::{Error, Result};

/// Version tag written into every file format produced by this crate.
pub const FORMAT_VERSION: u32 = 1;
