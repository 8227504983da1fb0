mod common;

use common::{brute_force_m_hat, random_matrix, random_vector, rng};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use utilearn::ensemble::{
    aic_trace, bagging, boost_iterate, bumping, gradient_boost, pseudo_observation, refit_members, standard_normal,
    training_errors, wild_bootstrap, AicStatus, BootstrapConfig,
};
use utilearn::estimation::{cfgls_fixed, FeasibleSet, NoiseKind, NoiseModel, RegressionSystem};
use utilearn::linalg::min_eigenvalue;

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(x)
}

fn design(n: usize, c: usize, seed: u64) -> RegressionSystem {
    let mut r = rng(seed);
    let x = random_matrix(&mut r, n, c);
    let y = random_vector(&mut r, n);
    RegressionSystem::from_design(x, y, FeasibleSet::unbounded(c)).unwrap()
}

#[test]
fn pseudo_observation_hand_case() {
    let sys = RegressionSystem::from_design(DMatrix::identity(2, 2), v(&[0.0, 0.0]), FeasibleSet::unbounded(2)).unwrap();
    let g = NoiseModel::diagonal(NoiseKind::Hc4, &[4.0, 1.0]);
    let beta = v(&[0.5, -1.0]);
    let y = pseudo_observation(&sys, &beta, &g, &v(&[1.0, 1.0])).unwrap();
    assert_eq!(y - &beta, v(&[2.0, 1.0]));
}

#[test]
fn bootstrap_is_reproducible_and_centered() {
    let sys = design(6, 2, 1);
    let beta = v(&[0.3, -0.7]);
    let diag = [0.5, 1.0, 2.0, 0.1, 3.0, 1e-8];
    let g = NoiseModel::diagonal(NoiseKind::Hc4, &diag);
    let cfg = BootstrapConfig { replicates: 2000, seed: 42 };
    let a = wild_bootstrap(&sys, &beta, &g, &cfg).unwrap();
    assert_eq!(a, wild_bootstrap(&sys, &beta, &g, &cfg).unwrap());
    assert_ne!(a, wild_bootstrap(&sys, &beta, &g, &BootstrapConfig { seed: 43, ..cfg }).unwrap());
    let fit = &sys.x * &beta;
    let n = a.len() as f64;
    for i in 0..6 {
        let mean = a.iter().map(|y| y[i] - fit[i]).sum::<f64>() / n;
        assert!(mean.abs() <= 4.0 * (diag[i] / n).sqrt(), "component {i}: {mean}");
    }
    assert!(wild_bootstrap(&sys, &beta, &g, &BootstrapConfig { replicates: 0, seed: 1 }).is_err());
}

#[test]
fn floored_covariance_bootstrap_concentrates_on_fit() {
    let sys = design(4, 2, 2);
    let beta = v(&[1.0, 2.0]);
    let g = NoiseModel::diagonal(NoiseKind::Freedman, &[1e-8; 4]);
    let reps = wild_bootstrap(&sys, &beta, &g, &BootstrapConfig { replicates: 1000, seed: 0 }).unwrap();
    let fit = &sys.x * &beta;
    for i in 0..4 {
        let mean = reps.iter().map(|y| y[i]).sum::<f64>() / 1000.0;
        assert!((mean - fit[i]).abs() <= 4.0 * 1e-4 / 1000f64.sqrt());
    }
}

#[test]
fn normal_streams_are_independent_of_count() {
    assert_eq!(standard_normal(5, 7, 3), standard_normal(5, 7, 3));
    assert_ne!(standard_normal(5, 7, 3), standard_normal(5, 7, 4));
}

#[test]
fn bagging_examples() {
    let free = FeasibleSet::unbounded(2);
    let out = bagging(&[v(&[1.0, 2.0]), v(&[3.0, 4.0])], &free).unwrap();
    assert_eq!(out.beta, v(&[2.0, 3.0]));

    let same = bagging(&vec![v(&[1.5, -2.0]); 5], &free).unwrap();
    assert_eq!(same.covariance.unwrap(), DMatrix::zeros(2, 2));

    let out = bagging(&[v(&[0.0]), v(&[2.0])], &FeasibleSet::unbounded(1)).unwrap();
    assert_eq!(out.covariance.unwrap(), DMatrix::from_element(1, 1, 1.0));

    let boxed = FeasibleSet { lower: vec![0.0], upper: vec![f64::INFINITY] };
    let out = bagging(&[v(&[-3.0]), v(&[1.0])], &boxed).unwrap();
    assert_eq!(out.beta_unprojected, v(&[-1.0]));
    assert_eq!(out.beta, v(&[0.0]));
    assert!(bagging(&[], &free).is_err());
}

#[test]
fn bumping_examples() {
    let sys = RegressionSystem::from_design(DMatrix::identity(1, 1), v(&[0.0]), FeasibleSet::unbounded(1)).unwrap();
    let members: Vec<_> = [0.5f64, 0.2, 0.9].iter().map(|e| v(&[e.sqrt()])).collect();
    let out = bumping(&sys, &members).unwrap();
    assert_eq!(out.selection_index, Some(1));
    assert_eq!(out.training_errors.len(), 3);

    let tied = bumping(&sys, &[v(&[1.0]), v(&[-1.0]), v(&[1.0])]).unwrap();
    assert_eq!(tied.selection_index, Some(0));

    let exact = bumping(&sys, &[v(&[0.1]), v(&[0.3]), v(&[0.0])]).unwrap();
    assert_eq!(exact.selection_index, Some(2));
    assert_eq!(exact.training_errors[2], 0.0);
}

#[test]
fn single_member_bagging_is_that_refit() {
    let sys = design(12, 2, 3);
    let g = NoiseModel::spherical(12, 0.2);
    let beta = v(&[0.1, 0.2]);
    let pseudo = wild_bootstrap(&sys, &beta, &g, &BootstrapConfig { replicates: 1, seed: 5 }).unwrap();
    let members: Vec<_> = refit_members(&sys, &pseudo, NoiseKind::Hc4, 2).unwrap().into_iter().map(|m| m.beta).collect();
    let direct = cfgls_fixed(&sys.with_y(pseudo[0].clone()).unwrap(), NoiseKind::Hc4, 2).unwrap();
    assert_eq!(bagging(&members, &sys.feasible).unwrap().beta, direct.beta);
}

#[test]
fn boosting_square_case_interpolates() {
    let x = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, -1.0, 3.0, 0.0, 1.0]);
    let sys = RegressionSystem::from_design(x, v(&[1.0, 2.0, 3.0]), FeasibleSet::unbounded(3)).unwrap();
    let out = gradient_boost(&sys, 1.0, 10, &DVector::zeros(3)).unwrap();
    let t = out.aic_trace.unwrap();
    assert_eq!(t.m_hat, 1);
    assert_eq!(t.entries[0].status, AicStatus::PerfectFit);
    assert!(t.entries[0].sigma2 < 1e-24);
    assert_eq!(out.residual_norms.len(), 2);
    assert!(out.residual_norms[1] < 1e-12);
}

#[test]
fn boosting_rejects_bad_parameters() {
    let sys = design(10, 2, 4);
    let b = DVector::zeros(2);
    assert!(gradient_boost(&sys, 0.0, 10, &b).is_err());
    assert!(gradient_boost(&sys, 1.5, 10, &b).is_err());
    assert!(gradient_boost(&sys, 0.5, 1, &b).is_err());
    assert!(gradient_boost(&sys, 0.5, 10, &DVector::zeros(3)).is_err());
}

/// AIC list by explicit matrix powers of `I - nu H`.
#[test]
fn m_hat_matches_brute_force() {
    let mut r = rng(99);
    for case in 0..20 {
        let c = r.random_range(1..5);
        let n = r.random_range(c + 4..=40);
        let nu = r.random_range(0.05..1.0);
        let sys = design(n, c, 1000 + case);
        let trace = aic_trace(&sys, nu, 60, &DVector::zeros(c)).unwrap();
        assert_eq!(trace.m_hat, brute_force_m_hat(&sys.x, &sys.y, nu, 60), "case {case}");
    }
}

#[test]
fn boosting_approaches_the_hat_projection() {
    let sys = design(25, 3, 8);
    let x = &sys.x;
    let hy = x * (x.transpose() * x).try_inverse().unwrap() * x.transpose() * &sys.y;
    let out = gradient_boost(&sys, 0.2, 50, &v(&[3.0, -2.0, 1.0])).unwrap();
    let steps = 10 * out.aic_trace.unwrap().m_hat.max(1);
    let mut beta = v(&[3.0, -2.0, 1.0]);
    let first = (x * &beta - &hy).norm();
    let mut last = first;
    for _ in 0..steps {
        beta = boost_iterate(&sys, 0.2, &beta, 1).unwrap().0;
        let d = (x * &beta - &hy).norm();
        assert!(d <= last * (1.0 + 1e-12) + 1e-15);
        last = d;
    }
    // Each step contracts the gap to HY by exactly 1 - nu.
    assert!((last - first * 0.8f64.powi(steps as i32)).abs() <= 1e-9 * first);
}

fn members(seed: u64, n: usize, c: usize) -> Vec<DVector<f64>> {
    let mut r = rng(seed);
    (0..n).map(|_| random_vector(&mut r, c) * 3.0).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bagged_estimate_is_the_mean_with_psd_covariance(seed in 0u64..10_000, n in 1usize..40, c in 1usize..6) {
        let m = members(seed, n, c);
        let out = bagging(&m, &FeasibleSet::unbounded(c)).unwrap();
        let mean = m.iter().fold(DVector::zeros(c), |a, b| a + b) / n as f64;
        prop_assert!((&out.beta - &mean).amax() <= 1e-12 * mean.amax().max(1.0));
        let cov = out.covariance.unwrap();
        prop_assert_eq!(&cov, &cov.transpose());
        prop_assert!(min_eigenvalue(&cov) >= -1e-10);
    }

    #[test]
    fn bumping_attains_the_minimum(seed in 0u64..10_000, n in 1usize..20) {
        let sys = design(15, 3, seed);
        let m = members(seed + 1, n, 3);
        let out = bumping(&sys, &m).unwrap();
        let errs = training_errors(&sys, &m).unwrap();
        let k = out.selection_index.unwrap();
        prop_assert!(k < n);
        let min = errs.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(sys.sum_sq_residuals(&out.beta_unprojected), min);
        prop_assert_eq!(errs[k], min);
    }

    #[test]
    fn stage_two_residuals_never_increase(seed in 0u64..10_000, nu in 0.01f64..=1.0) {
        let sys = design(20, 3, seed);
        let mut r = rng(seed);
        let start = random_vector(&mut r, 3) * 5.0;
        let (_, norms) = boost_iterate(&sys, nu, &start, 40).unwrap();
        for w in norms.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn ensembles_end_feasible(seed in 0u64..10_000) {
        let sys = {
            let s = design(20, 3, seed);
            let f = FeasibleSet { lower: vec![0.0, -1.0, f64::NEG_INFINITY], upper: vec![f64::INFINITY, 1.0, f64::INFINITY] };
            RegressionSystem::from_design(s.x, s.y, f).unwrap()
        };
        let m = members(seed, 10, 3);
        prop_assert!(sys.feasible.contains(&bagging(&m, &sys.feasible).unwrap().beta, 1e-10));
        let boost = gradient_boost(&sys, 0.3, 30, &m[0]).unwrap();
        prop_assert!(sys.feasible.contains(&boost.beta, 1e-10));
    }
}
