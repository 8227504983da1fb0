use nalgebra::{DMatrix, DVector};

use super::EnsembleOutput;
use crate::estimation::{FeasibleSet, Method, RegressionSystem};
use crate::{Error, Result};

fn check_members(members: &[DVector<f64>]) -> Result<usize> {
    let first = members
        .first()
        .ok_or_else(|| Error::Empty("no ensemble members".into()))?;
    if members.iter().any(|m| m.len() != first.len()) {
        return Err(Error::Dimension("ensemble members differ in length".into()));
    }
    Ok(first.len())
}

/// Mean of the members and their `1/N` covariance; the mean is then
/// projected onto `feasible`.
pub fn bagging(members: &[DVector<f64>], feasible: &FeasibleSet) -> Result<EnsembleOutput> {
    let c = check_members(members)?;
    if feasible.len() != c {
        return Err(Error::Dimension("feasible set does not match members".into()));
    }
    let n = members.len() as f64;
    let mut mean = DVector::zeros(c);
    for m in members {
        mean += m;
    }
    mean /= n;
    let mut cov = DMatrix::zeros(c, c);
    for m in members {
        let d = m - &mean;
        cov += &d * d.transpose();
    }
    cov /= n;
    let cov = (&cov + cov.transpose()) * 0.5;
    let mut out = EnsembleOutput::new(Method::Bagging, mean.clone(), feasible.project(&mean));
    out.member_estimates = members.to_vec();
    out.covariance = Some(cov);
    Ok(out)
}

/// `||Y - X beta_j||^2` for every candidate.
pub fn training_errors(sys: &RegressionSystem, members: &[DVector<f64>]) -> Result<Vec<f64>> {
    let c = check_members(members)?;
    if c != sys.n_cols() {
        return Err(Error::Dimension("members do not match the system".into()));
    }
    Ok(members.iter().map(|b| sys.sum_sq_residuals(b)).collect())
}

/// The candidate with least training error on `sys`; member 0 is expected to
/// be the original-data fit and ties go to the lowest index.
pub fn bumping(sys: &RegressionSystem, members: &[DVector<f64>]) -> Result<EnsembleOutput> {
    let errors = training_errors(sys, members)?;
    let mut best = 0;
    for (j, &e) in errors.iter().enumerate() {
        if e < errors[best] {
            best = j;
        }
    }
    let chosen = members[best].clone();
    let mut out = EnsembleOutput::new(Method::Bumping, chosen.clone(), sys.feasible.project(&chosen));
    out.member_estimates = members.to_vec();
    out.selection_index = Some(best);
    out.training_errors = errors;
    Ok(out)
}
