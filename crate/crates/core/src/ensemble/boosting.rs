//! L2 gradient boosting from a cFGLS start with AIC-selected stopping.
//!
//! Stage 1 picks the iteration count from the spectrum of the hat matrix
//! `H = U diag(kappa) U'`: `B_m = I - (I - nu H)^m` has eigenvalues
//! `1 - (1 - nu kappa_k)^m` on `span(U)` and 0 on its complement.
//! Stage 2 runs that many residual refits. Fixed coefficients are held at
//! their starting values and moved into an offset.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::EnsembleOutput;
use crate::estimation::{Method, RegressionSystem};
use crate::linalg::{is_rank_deficient, lstsq_with, HatSpectrum};
use crate::{Error, Result};

/// Relative variance below which a fit counts as an interpolant.
const PERFECT_FIT_REL: f64 = 1e-24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AicStatus {
    Finite,
    /// `sigma^2_m = 0`; AIC is `-inf`.
    PerfectFit,
    /// `Tr(B_m) + 2 >= n_d`; left out of the argmin.
    Excluded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AicEntry {
    pub m: usize,
    /// `None` unless the status is `Finite`.
    pub aic: Option<f64>,
    pub sigma2: f64,
    pub trace: f64,
    pub status: AicStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AicTrace {
    pub entries: Vec<AicEntry>,
    pub m_hat: usize,
}

fn validate(nu: f64, m_max: usize) -> Result<()> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::Invalid(format!("boosting step nu = {nu} is outside (0, 1]")));
    }
    if m_max < 2 {
        return Err(Error::Invalid("M_max must be at least 2".into()));
    }
    Ok(())
}

struct FreeView {
    free: Vec<usize>,
    x: DMatrix<f64>,
    offset_y: DVector<f64>,
}

fn free_view(sys: &RegressionSystem, beta: &DVector<f64>) -> FreeView {
    let free = sys.feasible.free_indices();
    let fixed = sys.feasible.fixed_indices();
    let mut offset_y = sys.y.clone();
    if !fixed.is_empty() {
        offset_y -= sys.x.select_columns(&fixed) * beta.select_rows(&fixed);
    }
    FreeView {
        x: sys.x.select_columns(&free),
        free,
        offset_y,
    }
}

/// Stage 1: `AIC_m` for `m = 1 .. M_max - 1` and the selected `M_hat`.
pub fn aic_trace(sys: &RegressionSystem, nu: f64, m_max: usize, beta_init: &DVector<f64>) -> Result<AicTrace> {
    validate(nu, m_max)?;
    if beta_init.len() != sys.n_cols() {
        return Err(Error::Dimension("initial estimate does not match the system".into()));
    }
    let view = free_view(sys, beta_init);
    let y = &view.offset_y;
    let n = sys.n_rows() as f64;
    let spec = HatSpectrum::new(&view.x);
    let coeffs = spec.u.transpose() * y;
    let perp = (y - &spec.u * &coeffs).norm_squared();
    let mean_y2 = y.norm_squared() / n.max(1.0);

    let mut entries = Vec::with_capacity(m_max - 1);
    for m in 1..m_max {
        let mut sse = perp;
        let mut trace = 0.0;
        for (c, k) in coeffs.iter().zip(spec.kappa.iter()) {
            let r = (1.0 - nu * k).powi(m as i32);
            sse += (r * c).powi(2);
            trace += 1.0 - r;
        }
        let sigma2 = sse / n;
        let denom = 1.0 - (trace + 2.0) / n;
        let (status, aic) = if sigma2 == 0.0 || sigma2 <= PERFECT_FIT_REL * mean_y2 {
            (AicStatus::PerfectFit, None)
        } else if denom <= 0.0 {
            (AicStatus::Excluded, None)
        } else {
            (AicStatus::Finite, Some(sigma2.ln() + (1.0 + trace / n) / denom))
        };
        entries.push(AicEntry {
            m,
            aic,
            sigma2,
            trace,
            status,
        });
    }
    let m_hat = select_m(&entries);
    Ok(AicTrace { entries, m_hat })
}

/// Earliest perfect fit, else the smallest finite AIC (earliest on ties), else 1.
fn select_m(entries: &[AicEntry]) -> usize {
    if let Some(e) = entries.iter().find(|e| e.status == AicStatus::PerfectFit) {
        return e.m;
    }
    let mut best: Option<(usize, f64)> = None;
    for e in entries {
        if let Some(a) = e.aic {
            if best.is_none_or(|(_, b)| a < b) {
                best = Some((e.m, a));
            }
        }
    }
    best.map_or(1, |b| b.0)
}

/// Stage 2 without the final projection: `steps` updates
/// `beta <- beta + nu (X'X)^{-1} X' e`. Returns the iterate and `||e||`
/// before the first and after each step.
pub fn boost_iterate(
    sys: &RegressionSystem,
    nu: f64,
    beta_init: &DVector<f64>,
    steps: usize,
) -> Result<(DVector<f64>, Vec<f64>)> {
    if beta_init.len() != sys.n_cols() {
        return Err(Error::Dimension("initial estimate does not match the system".into()));
    }
    let view = free_view(sys, beta_init);
    let ridge = !view.free.is_empty() && (view.x.nrows() < view.x.ncols() || is_rank_deficient(&view.x));
    let mut beta = beta_init.clone();
    let mut e = sys.residuals(&beta);
    let mut norms = vec![e.norm()];
    for _ in 0..steps {
        if view.free.is_empty() {
            norms.push(e.norm());
            continue;
        }
        let step = lstsq_with(&view.x, &e, ridge)?;
        for (k, &j) in view.free.iter().enumerate() {
            beta[j] += nu * step[k];
        }
        e = sys.residuals(&beta);
        norms.push(e.norm());
    }
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("boosting produced a non-finite estimate".into()));
    }
    Ok((beta, norms))
}

pub fn gradient_boost(
    sys: &RegressionSystem,
    nu: f64,
    m_max: usize,
    beta_init: &DVector<f64>,
) -> Result<EnsembleOutput> {
    let trace = aic_trace(sys, nu, m_max, beta_init)?;
    let (raw, norms) = boost_iterate(sys, nu, beta_init, trace.m_hat)?;
    let mut out = EnsembleOutput::new(Method::Boosting, raw.clone(), sys.feasible.project(&raw));
    out.aic_trace = Some(trace);
    out.residual_norms = norms;
    Ok(out)
}
