//! First-order game form, projected-gradient Nash computation and
//! differential Nash verification.

use serde::{Deserialize, Serialize};

use super::Game;
use crate::{Error, Result};

/// A constraint with `h(x_i) <= ACTIVE_TOL` counts as active.
pub const ACTIVE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub step: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            step: 0.05,
            tol: 1e-8,
            max_iter: 100_000,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Invalid(format!("step must be positive, got {}", self.step)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Invalid(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub point: Vec<f64>,
    /// One vector per player, aligned with `ConstraintSet::constraints()`.
    pub multipliers: Vec<Vec<f64>>,
    pub omega_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub second_order_ok: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DifferentialNashCheck {
    pub omega_norm: f64,
    pub first_order_ok: bool,
    pub second_order_ok: Vec<bool>,
}

impl DifferentialNashCheck {
    pub fn is_differential_nash(&self) -> bool {
        self.first_order_ok && self.second_order_ok.iter().all(|&ok| ok)
    }
}

/// Stacked own-action derivatives `D_i f_i(x)`.
pub fn gradient(game: &Game, x: &[f64]) -> Result<Vec<f64>> {
    game.check_action(x)?;
    game.players()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let g = p.utility.d_own(x, i)?;
            if g.is_finite() {
                Ok(g)
            } else {
                Err(Error::Numerical(format!("non-finite gradient for player {i} at {x:?}")))
            }
        })
        .collect()
}

fn check_multipliers(game: &Game, mu: &[Vec<f64>]) -> Result<()> {
    if mu.len() != game.len() {
        return Err(Error::Dimension(format!(
            "multipliers for {} players in a {}-player game",
            mu.len(),
            game.len()
        )));
    }
    for (i, (p, m)) in game.players().iter().zip(mu).enumerate() {
        if m.len() != p.constraints.len() {
            return Err(Error::Dimension(format!(
                "player {i} has {} constraints but {} multipliers",
                p.constraints.len(),
                m.len()
            )));
        }
        if m.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Invalid(format!("negative multiplier for player {i}")));
        }
    }
    Ok(())
}

/// `omega(x, mu)_i = D_i f_i(x) + sum_{j active} mu_ij D_i h_ij(x_i)`.
pub fn differential_game_form(game: &Game, x: &[f64], mu: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_multipliers(game, mu)?;
    let g = gradient(game, x)?;
    Ok(game
        .players()
        .iter()
        .zip(g)
        .zip(mu)
        .zip(x)
        .map(|(((p, gi), mi), &xi)| {
            p.constraints
                .constraints()
                .iter()
                .zip(mi)
                .filter(|(h, _)| h.value(xi) <= ACTIVE_TOL)
                .fold(gi, |acc, (h, m)| acc + m * h.derivative())
        })
        .collect())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Checks the first- and second-order conditions of a differential Nash
/// equilibrium at `(x, mu)`; first order holds when `||omega|| <= eps`.
pub fn check_differential_nash(
    game: &Game,
    x: &[f64],
    mu: &[Vec<f64>],
    eps: f64,
) -> Result<DifferentialNashCheck> {
    let omega = differential_game_form(game, x, mu)?;
    let omega_norm = norm(&omega);
    let second_order_ok = game
        .players()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let xi = x[i];
            // An active constraint with a positive multiplier pins the 1-D tangent space to {0}.
            let pinned = p
                .constraints
                .constraints()
                .iter()
                .zip(&mu[i])
                .any(|(h, &m)| h.value(xi) <= ACTIVE_TOL && m > 0.0);
            // Box constraints are affine, so D2 L_i = D2 f_i.
            Ok(pinned || p.utility.d2_own(x, i)? < 0.0)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DifferentialNashCheck {
        omega_norm,
        first_order_ok: omega_norm <= eps,
        second_order_ok,
    })
}

/// Multipliers from KKT stationarity at binding bounds: `mu = max(0, -D_i f_i / D_i h)`.
fn recover_multipliers(game: &Game, x: &[f64], g: &[f64]) -> Vec<Vec<f64>> {
    game.players()
        .iter()
        .zip(x)
        .zip(g)
        .map(|((p, &xi), &gi)| {
            p.constraints
                .constraints()
                .iter()
                .map(|h| {
                    if h.value(xi) <= ACTIVE_TOL {
                        (-gi / h.derivative()).max(0.0)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Simultaneous projected gradient ascent `x_i <- P_i(x_i + step * D_i f_i(x))`.
///
/// Stops once `||x^{t+1} - x^t|| / step <= tol` and the game form at the new
/// point, with multipliers recovered from binding bounds, is within `tol`.
/// `x0` is projected onto the strategy space first. Exhausting `max_iter`
/// is reported through `converged = false`.
pub fn solve_nash(game: &Game, x0: &[f64], params: &SolverParams) -> Result<EquilibriumReport> {
    params.validate()?;
    let mut x = game.project(x0)?;
    let mut next = vec![0.0; x.len()];
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=params.max_iter {
        iterations = it;
        let g = gradient(game, &x)?;
        for (i, p) in game.players().iter().enumerate() {
            next[i] = p.constraints.project(x[i] + params.step * g[i]);
        }
        let moved = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
            / params.step;
        std::mem::swap(&mut x, &mut next);
        if moved <= params.tol {
            let g = gradient(game, &x)?;
            let mu = recover_multipliers(game, &x, &g);
            if norm(&differential_game_form(game, &x, &mu)?) <= params.tol {
                converged = true;
                break;
            }
        }
    }
    let g = gradient(game, &x)?;
    let multipliers = recover_multipliers(game, &x, &g);
    let check = check_differential_nash(game, &x, &multipliers, params.tol)?;
    Ok(EquilibriumReport {
        point: x,
        multipliers,
        omega_norm: check.omega_norm,
        iterations,
        converged,
        second_order_ok: check.second_order_ok,
    })
}
