use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::noise::{estimate_noise, NoiseKind};
use super::system::RegressionSystem;
use super::{solve_cols, solve_gls, EstimatorResult, Method};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfglsOptions {
    pub noise: NoiseKind,
    pub max_outer: usize,
    pub cv_folds: usize,
    pub seed: u64,
}

impl Default for CfglsOptions {
    fn default() -> Self {
        CfglsOptions {
            noise: NoiseKind::Freedman,
            max_outer: 3,
            cv_folds: 10,
            seed: 0,
        }
    }
}

impl CfglsOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer < 1 {
            return Err(Error::Invalid("max_outer must be at least 1".into()));
        }
        if self.cv_folds < 2 {
            return Err(Error::Invalid("cv_folds must be at least 2".into()));
        }
        Ok(())
    }
}

/// The cFGLS iterates `beta^1 .. beta^T`: cOLS residuals seed `G^1`, and
/// each GLS fit's residuals give the next covariance.
pub fn cfgls_path(sys: &RegressionSystem, kind: NoiseKind, iterations: usize) -> Result<Vec<EstimatorResult>> {
    let mut path: Vec<EstimatorResult> = Vec::with_capacity(iterations);
    let mut residuals = solve_cols(sys)?.residuals;
    for t in 1..=iterations {
        let noise = estimate_noise(kind, sys, &residuals)?;
        let mut fit = solve_gls(sys, &noise)?;
        fit.diagnostics.outer_iterations = t;
        residuals = fit.residuals.clone();
        path.push(fit);
    }
    Ok(path)
}

/// cFGLS with the iteration count fixed (no cross-validation).
pub fn cfgls_fixed(sys: &RegressionSystem, kind: NoiseKind, iterations: usize) -> Result<EstimatorResult> {
    if iterations < 1 {
        return Err(Error::Invalid("cFGLS needs at least one iteration".into()));
    }
    Ok(cfgls_path(sys, kind, iterations)?
        .pop()
        .expect("path has at least one iterate"))
}

/// RNG stream reserved for fold assignment; bootstrap replicates use `0..N`.
pub const CV_STREAM: u64 = u64::MAX;

/// Contiguous folds over a seeded shuffle of the records.
pub fn cv_folds(records: &[usize], folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order = records.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(CV_STREAM);
    order.shuffle(&mut rng);
    let k = folds.min(order.len()).max(1);
    let (base, extra) = (order.len() / k, order.len() % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        out.push(order[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Iterated feasible GLS with the outer iteration count chosen by
/// cross-validated held-out squared error; ties go to the smaller count.
pub fn solve_cfgls(sys: &RegressionSystem, opts: &CfglsOptions) -> Result<EstimatorResult> {
    opts.validate()?;
    let path = cfgls_path(sys, opts.noise, opts.max_outer)?;
    let mut scores = Vec::new();
    let t_star = if opts.max_outer == 1 {
        1
    } else {
        let folds = cv_folds(&sys.records(), opts.cv_folds, opts.seed);
        let per_fold: Vec<(Vec<f64>, usize)> = folds
            .par_iter()
            .map(|held| -> Result<(Vec<f64>, usize)> {
                let train = sys.subset(|r| !held.contains(&r));
                let test = sys.subset(|r| held.contains(&r));
                let fits = cfgls_path(&train, opts.noise, opts.max_outer)?;
                Ok((
                    fits.iter()
                        .map(|f| test.sum_sq_residuals(&f.beta))
                        .collect(),
                    test.n_rows(),
                ))
            })
            .collect::<Result<_>>()?;
        let rows: usize = per_fold.iter().map(|f| f.1).sum::<usize>().max(1);
        scores = (0..opts.max_outer)
            .map(|t| per_fold.iter().map(|f| f.0[t]).sum::<f64>() / rows as f64)
            .collect();
        let best = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let scale = sys.y.norm_squared() / sys.n_rows().max(1) as f64;
        let tol = 1e-10 * best.abs() + 1e-14 * scale;
        scores.iter().position(|&s| s <= best + tol).unwrap_or(0) + 1
    };
    let mut fit = path
        .into_iter()
        .nth(t_star - 1)
        .expect("t* within the computed path");
    fit.method = Method::Cfgls;
    fit.diagnostics.outer_iterations = t_star;
    fit.diagnostics.cv_scores = scores;
    if fit.beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite cFGLS estimate".into()));
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::system::FeasibleSet;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn folds_partition_records() {
        let recs: Vec<usize> = (0..23).collect();
        let folds = cv_folds(&recs, 10, 7);
        assert_eq!(folds.len(), 10);
        let mut all: Vec<usize> = folds.concat();
        all.sort();
        assert_eq!(all, recs);
        assert_eq!(cv_folds(&recs, 10, 7), folds);
        assert_eq!(cv_folds(&recs[..3], 10, 7).len(), 3);
    }

    #[test]
    fn noise_free_data_gives_exact_fit_and_t1() {
        let x = DMatrix::from_fn(20, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let beta = DVector::from_row_slice(&[1.5, -0.25]);
        let y = &x * &beta;
        let sys = RegressionSystem::from_design(x, y, FeasibleSet::unbounded(2)).unwrap();
        for noise in [NoiseKind::Freedman, NoiseKind::Hc4] {
            let fit = solve_cfgls(
                &sys,
                &CfglsOptions {
                    noise,
                    max_outer: 3,
                    cv_folds: 5,
                    seed: 1,
                },
            )
            .unwrap();
            assert!((&fit.beta - &beta).amax() < 1e-6);
            assert_eq!(fit.diagnostics.outer_iterations, 1);
        }
    }

    #[test]
    fn single_outer_iteration_is_one_step_fgls() {
        let x = DMatrix::from_fn(12, 2, |i, j| if j == 0 { 1.0 } else { (i as f64).sin() });
        let y = DVector::from_fn(12, |i, _| (i as f64 * 0.7).cos());
        let sys = RegressionSystem::from_design(x, y, FeasibleSet::unbounded(2)).unwrap();
        let fit = solve_cfgls(
            &sys,
            &CfglsOptions {
                noise: NoiseKind::Hc4,
                max_outer: 1,
                cv_folds: 4,
                seed: 3,
            },
        )
        .unwrap();
        let ols = solve_cols(&sys).unwrap();
        let g = estimate_noise(NoiseKind::Hc4, &sys, &ols.residuals).unwrap();
        let one = solve_gls(&sys, &g).unwrap();
        assert_eq!(fit.beta, one.beta);
        assert!(fit.diagnostics.cv_scores.is_empty());
    }
}
