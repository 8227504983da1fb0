use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::estimation::{cfgls_fixed, EstimatorResult, NoiseKind, NoiseModel, RegressionSystem};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Invalid("bootstrap needs at least one replicate".into()));
        }
        Ok(())
    }
}

/// Standard normal vector from the independent stream `(seed, j)`.
pub fn standard_normal(n: usize, seed: u64, j: usize) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(j as u64);
    DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut rng)))
}

/// `X beta + G^{1/2} eps`.
pub fn pseudo_observation(
    sys: &RegressionSystem,
    beta: &DVector<f64>,
    noise: &NoiseModel,
    eps: &DVector<f64>,
) -> Result<DVector<f64>> {
    if beta.len() != sys.n_cols() || eps.len() != sys.n_rows() || noise.n() != sys.n_rows() {
        return Err(Error::Dimension("pseudo-observation inputs do not match the system".into()));
    }
    Ok(&sys.x * beta + noise.sqrt_apply(eps))
}

/// `N` wild-bootstrap responses `Y_j = X beta + G^{1/2} eps_j`.
pub fn wild_bootstrap(
    sys: &RegressionSystem,
    beta: &DVector<f64>,
    noise: &NoiseModel,
    cfg: &BootstrapConfig,
) -> Result<Vec<DVector<f64>>> {
    cfg.validate()?;
    (0..cfg.replicates)
        .into_par_iter()
        .map(|j| pseudo_observation(sys, beta, noise, &standard_normal(sys.n_rows(), cfg.seed, j)))
        .collect()
}

/// Refits every pseudo-response with cFGLS of the given kind at a fixed
/// iteration count, in replicate order.
pub fn refit_members(
    sys: &RegressionSystem,
    pseudo: &[DVector<f64>],
    kind: NoiseKind,
    iterations: usize,
) -> Result<Vec<EstimatorResult>> {
    pseudo
        .par_iter()
        .map(|y| cfgls_fixed(&sys.with_y(y.clone())?, kind, iterations))
        .collect()
}
