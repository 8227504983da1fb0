//! Bounded-variable least squares `min ||y - X b||^2, lower <= b <= upper`
//! by a primal active-set method with QR subproblems.

use nalgebra::{DMatrix, DVector};

use super::system::FeasibleSet;
use crate::linalg::{is_rank_deficient, lstsq_qr, RIDGE_LAMBDA};
use crate::{Error, Result};

/// KKT residual tolerance, relative to `max(1, ||X'y||_inf)`.
pub const KKT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub beta: DVector<f64>,
    /// `||y - X beta||_2` (without the ridge term).
    pub objective: f64,
    pub kkt_residual: f64,
    pub ridge_used: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Free,
    AtLower,
    AtUpper,
    Fixed,
}

/// Solves the box-constrained least-squares problem. When the non-fixed
/// columns are rank deficient the objective gains `RIDGE_LAMBDA ||b_free||^2`
/// and `ridge_used` is set.
pub fn solve_box_lsq(x: &DMatrix<f64>, y: &DVector<f64>, feasible: &FeasibleSet) -> Result<QpSolution> {
    let (n, c) = x.shape();
    if y.len() != n || feasible.len() != c {
        return Err(Error::Dimension(format!(
            "least squares with X {n}x{c}, y {}, bounds {}",
            y.len(),
            feasible.len()
        )));
    }
    feasible.validate()?;
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite least-squares data".into()));
    }

    let free_cols = feasible.free_indices();
    let ridge = !free_cols.is_empty()
        && (n < free_cols.len() || is_rank_deficient(&x.select_columns(&free_cols)));
    let (a, b) = if ridge {
        let mut a = DMatrix::zeros(n + free_cols.len(), c);
        a.view_mut((0, 0), (n, c)).copy_from(x);
        let s = RIDGE_LAMBDA.sqrt();
        for (k, &j) in free_cols.iter().enumerate() {
            a[(n + k, j)] = s;
        }
        let mut b = DVector::zeros(n + free_cols.len());
        b.rows_mut(0, n).copy_from(y);
        (a, b)
    } else {
        (x.clone(), y.clone())
    };

    let (lo, hi) = (&feasible.lower, &feasible.upper);
    let mut beta = DVector::zeros(c);
    let mut state = vec![State::Free; c];
    for j in 0..c {
        beta[j] = 0.0f64.max(lo[j]).min(hi[j]);
        state[j] = if lo[j] == hi[j] {
            State::Fixed
        } else if beta[j] == lo[j] {
            State::AtLower
        } else if beta[j] == hi[j] {
            State::AtUpper
        } else {
            State::Free
        };
    }

    let scale = (a.transpose() * &b).amax().max(1.0);
    let max_iter = 20 * c + 100;
    let mut iterations = 0;
    // A variable released and immediately pushed back onto its bound is not
    // released again in the next round (guards against rounding cycles).
    let mut last_released: Option<usize> = None;
    loop {
        // Inner loop: optimise over free variables, backtracking onto bounds.
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(Error::NotConverged(format!(
                    "box least squares did not settle in {max_iter} iterations"
                )));
            }
            let f: Vec<usize> = (0..c).filter(|&j| state[j] == State::Free).collect();
            if f.is_empty() {
                break;
            }
            let bound: Vec<usize> = (0..c).filter(|&j| state[j] != State::Free).collect();
            let mut rhs = b.clone();
            if !bound.is_empty() {
                rhs -= a.select_columns(&bound) * beta.select_rows(&bound);
            }
            let z = lstsq_qr(&a.select_columns(&f), &rhs)?;
            let mut alpha: f64 = 1.0;
            let mut hit = None;
            for (k, &j) in f.iter().enumerate() {
                let (bj, zj) = (beta[j], z[k]);
                let limit = if zj < lo[j] {
                    Some(((lo[j] - bj) / (zj - bj), State::AtLower))
                } else if zj > hi[j] {
                    Some(((hi[j] - bj) / (zj - bj), State::AtUpper))
                } else {
                    None
                };
                if let Some((t, s)) = limit {
                    let t = t.clamp(0.0, 1.0);
                    if t < alpha || hit.is_none() && t <= alpha {
                        alpha = t;
                        hit = Some((j, s));
                    }
                }
            }
            match hit {
                None => {
                    for (k, &j) in f.iter().enumerate() {
                        beta[j] = z[k];
                    }
                    break;
                }
                Some(_) => {
                    for (k, &j) in f.iter().enumerate() {
                        beta[j] += alpha * (z[k] - beta[j]);
                    }
                    for &j in &f {
                        if beta[j] <= lo[j] {
                            beta[j] = lo[j];
                            state[j] = State::AtLower;
                        } else if beta[j] >= hi[j] {
                            beta[j] = hi[j];
                            state[j] = State::AtUpper;
                        }
                    }
                    if let Some((j, s)) = hit {
                        if state[j] == State::Free {
                            state[j] = s;
                            beta[j] = if s == State::AtLower { lo[j] } else { hi[j] };
                        }
                    }
                }
            }
        }

        let blocked = last_released.filter(|&j| state[j] != State::Free);
        // Outer step: release the bound variable with the largest KKT violation.
        let w = a.transpose() * (&b - &a * &beta);
        let mut best: Option<(usize, f64)> = None;
        for j in 0..c {
            let v = match state[j] {
                State::AtLower => w[j],
                State::AtUpper => -w[j],
                _ => continue,
            };
            if v > KKT_TOL * scale * 1e-2 && Some(j) != blocked && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((j, v));
            }
        }
        match best {
            Some((j, _)) => {
                state[j] = State::Free;
                last_released = Some(j);
            }
            None => break,
        }
    }

    let r = &b - &a * &beta;
    let g = a.transpose() * &r;
    let mut viol: f64 = 0.0;
    for j in 0..c {
        let v = match state[j] {
            State::Fixed => 0.0,
            State::Free => g[j].abs(),
            State::AtLower => g[j].max(0.0),
            State::AtUpper => (-g[j]).max(0.0),
        };
        viol = viol.max(v);
    }
    let objective = (y - x * &beta).norm();
    Ok(QpSolution {
        beta,
        objective,
        kkt_residual: viol / scale,
        ridge_used: ridge,
        iterations,
    })
}
