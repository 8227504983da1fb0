//! Parameterized constrained concave games with scalar actions.

mod basis;
mod nash;

pub use basis::{ActionContext, Basis};
pub use nash::{
    check_differential_nash, differential_game_form, gradient, solve_nash, DifferentialNashCheck,
    EquilibriumReport, SolverParams, ACTIVE_TOL,
};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A basis function carrying a fixed, known weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnownTerm {
    pub basis: Basis,
    pub weight: f64,
}

/// One player's utility `<phi(x), theta> + known_scale * sum_t w_t * psi_t(x)`.
///
/// The known part holds whatever is not estimated: the incentive component
/// designed by a planner, or a normalizing term. `known_scale` is 1 for a plain
/// game and carries the aggregate coalition weight in a correlated game.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilitySpec {
    basis: Vec<Basis>,
    theta: Vec<f64>,
    known: Vec<KnownTerm>,
    known_scale: f64,
}

impl UtilitySpec {
    pub fn new(basis: Vec<Basis>, theta: Vec<f64>, known: Vec<KnownTerm>) -> Result<Self> {
        if basis.len() != theta.len() {
            return Err(Error::Dimension(format!(
                "{} basis functions but {} weights",
                basis.len(),
                theta.len()
            )));
        }
        for b in basis.iter().chain(known.iter().map(|k| &k.basis)) {
            b.validate()?;
        }
        if theta.iter().chain(known.iter().map(|k| &k.weight)).any(|w| !w.is_finite()) {
            return Err(Error::Invalid("non-finite utility weight".into()));
        }
        Ok(UtilitySpec {
            basis,
            theta,
            known,
            known_scale: 1.0,
        })
    }

    pub fn with_known_scale(mut self, scale: f64) -> Result<Self> {
        if !scale.is_finite() {
            return Err(Error::Invalid("non-finite known-part scale".into()));
        }
        self.known_scale = scale;
        Ok(self)
    }

    pub fn basis(&self) -> &[Basis] {
        &self.basis
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn known(&self) -> &[KnownTerm] {
        &self.known
    }

    pub fn known_scale(&self) -> f64 {
        self.known_scale
    }

    pub fn known_weights(&self) -> Vec<f64> {
        self.known.iter().map(|k| k.weight).collect()
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        let mut out = UtilitySpec::new(self.basis.clone(), theta, self.known.clone())?;
        out.known_scale = self.known_scale;
        Ok(out)
    }

    /// Same utility with the known-part weights replaced (e.g. one period's incentive).
    pub fn with_known_weights(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.known.len() {
            return Err(Error::Dimension(format!(
                "{} known-part weights supplied for {} terms",
                weights.len(),
                self.known.len()
            )));
        }
        let mut out = self.clone();
        for (term, &w) in out.known.iter_mut().zip(weights) {
            if !w.is_finite() {
                return Err(Error::Invalid("non-finite known-part weight".into()));
            }
            term.weight = w;
        }
        Ok(out)
    }

    /// Multiplies every term of the utility by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.theta.iter_mut().for_each(|t| *t *= c);
        out.known_scale *= c;
        out
    }

    /// `sum_j theta_j phi_j(x)`, the part that is linear in `theta`.
    pub fn estimated_value(&self, x: &[f64], i: usize) -> Result<f64> {
        let ctx = ActionContext::new(x, i)?;
        self.basis
            .iter()
            .zip(&self.theta)
            .try_fold(0.0, |acc, (b, t)| Ok(acc + t * b.value_at(ctx)?))
    }

    /// The known part `known_scale * fbar(x)`.
    pub fn known_value(&self, x: &[f64], i: usize) -> Result<f64> {
        let ctx = ActionContext::new(x, i)?;
        let raw = self
            .known
            .iter()
            .try_fold(0.0, |acc, k| Ok(acc + k.weight * k.basis.value_at(ctx)?))?;
        Ok(self.known_scale * raw)
    }

    pub fn value(&self, x: &[f64], i: usize) -> Result<f64> {
        Ok(self.estimated_value(x, i)? + self.known_value(x, i)?)
    }

    /// Derivative of the known part with respect to the own action.
    pub fn known_d_own(&self, x: &[f64], i: usize) -> Result<f64> {
        let ctx = ActionContext::new(x, i)?;
        let raw = self
            .known
            .iter()
            .try_fold(0.0, |acc, k| Ok(acc + k.weight * k.basis.d_own_at(ctx)?))?;
        Ok(self.known_scale * raw)
    }

    pub fn d_own(&self, x: &[f64], i: usize) -> Result<f64> {
        let ctx = ActionContext::new(x, i)?;
        let est = self
            .basis
            .iter()
            .zip(&self.theta)
            .try_fold(0.0, |acc, (b, t)| Ok(acc + t * b.d_own_at(ctx)?))?;
        Ok(est + self.known_d_own(x, i)?)
    }

    pub fn d2_own(&self, x: &[f64], i: usize) -> Result<f64> {
        let ctx = ActionContext::new(x, i)?;
        let est = self
            .basis
            .iter()
            .zip(&self.theta)
            .try_fold(0.0, |acc, (b, t)| Ok(acc + t * b.d2_own_at(ctx)?))?;
        let known = self
            .known
            .iter()
            .try_fold(0.0, |acc, k| Ok(acc + k.weight * k.basis.d2_own_at(ctx)?))?;
        Ok(est + self.known_scale * known)
    }
}

/// One concave constraint `h(x_i) >= 0` on a scalar action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constraint {
    /// `x_i - a >= 0`
    Lower(f64),
    /// `b - x_i >= 0`
    Upper(f64),
}

impl Constraint {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Constraint::Lower(a) => x - a,
            Constraint::Upper(b) => b - x,
        }
    }

    pub fn derivative(&self) -> f64 {
        match self {
            Constraint::Lower(_) => 1.0,
            Constraint::Upper(_) => -1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Constraint::Lower(_) => "lower",
            Constraint::Upper(_) => "upper",
        }
    }
}

/// Box constraint set of one player, listed lower bound first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

impl ConstraintSet {
    pub fn new(lower: Option<f64>, upper: Option<f64>) -> Result<Self> {
        let cs = ConstraintSet { lower, upper };
        cs.validate()?;
        Ok(cs)
    }

    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        Self::new(Some(lower), Some(upper))
    }

    pub fn unbounded() -> Self {
        ConstraintSet {
            lower: None,
            upper: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.iter().chain(&self.upper).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("bounds must be finite when present".into()));
        }
        if let (Some(a), Some(b)) = (self.lower, self.upper) {
            if a > b {
                return Err(Error::Invalid(format!("empty interval [{a}, {b}]")));
            }
        }
        Ok(())
    }

    pub fn constraints(&self) -> Vec<Constraint> {
        self.lower
            .map(Constraint::Lower)
            .into_iter()
            .chain(self.upper.map(Constraint::Upper))
            .collect()
    }

    /// Number of constraints `l_i`.
    pub fn len(&self) -> usize {
        self.lower.is_some() as usize + self.upper.is_some() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Euclidean projection onto the interval.
    pub fn project(&self, x: f64) -> f64 {
        let x = self.lower.map_or(x, |a| x.max(a));
        self.upper.map_or(x, |b| x.min(b))
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower.is_none_or(|a| x >= a) && self.upper.is_none_or(|b| x <= b)
    }

    /// A feasible point used as a default warm start.
    pub fn center(&self) -> f64 {
        match (self.lower, self.upper) {
            (Some(a), Some(b)) => 0.5 * (a + b),
            (Some(a), None) => a.max(0.0),
            (None, Some(b)) => b.min(0.0),
            (None, None) => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Player {
    pub utility: UtilitySpec,
    pub constraints: ConstraintSet,
}

/// A `p`-player game on the product of the players' constraint sets.
#[derive(Debug, Clone, PartialEq)]
pub struct Game {
    players: Vec<Player>,
}

impl Game {
    pub fn new(players: Vec<Player>) -> Result<Self> {
        if players.is_empty() {
            return Err(Error::Empty("a game needs at least one player".into()));
        }
        for p in &players {
            p.constraints.validate()?;
        }
        Ok(Game { players })
    }

    pub fn players(&self) -> &[Player] {
        &self.players
    }

    pub fn player(&self, i: usize) -> Result<&Player> {
        self.players
            .get(i)
            .ok_or_else(|| Error::Invalid(format!("player {i} not in a {}-player game", self.len())))
    }

    pub fn len(&self) -> usize {
        self.players.len()
    }

    pub fn is_empty(&self) -> bool {
        self.players.is_empty()
    }

    fn check_action(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.len() {
            return Err(Error::Dimension(format!(
                "joint action of length {} for a {}-player game",
                x.len(),
                self.len()
            )));
        }
        Ok(())
    }

    /// `f_i(x) = <phi_i(x), theta_i> + fbar_i(x)`.
    pub fn evaluate_utility(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.check_action(x)?;
        self.player(i)?.utility.value(x, i)
    }

    /// Sub-game among the listed players, in the listed order.
    pub fn restrict(&self, players: &[usize]) -> Result<Game> {
        let kept = players
            .iter()
            .map(|&i| self.player(i).cloned())
            .collect::<Result<Vec<_>>>()?;
        Game::new(kept)
    }

    /// Replaces player `i`'s utility.
    pub fn with_utility(&self, i: usize, utility: UtilitySpec) -> Result<Game> {
        self.player(i)?;
        let mut out = self.clone();
        out.players[i].utility = utility;
        Ok(out)
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_action(x)?;
        Ok(self
            .players
            .iter()
            .zip(x)
            .map(|(p, &xi)| p.constraints.project(xi))
            .collect())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.len()
            && self
                .players
                .iter()
                .zip(x)
                .all(|(p, &xi)| p.constraints.contains(xi))
    }

    pub fn default_start(&self) -> Vec<f64> {
        self.players.iter().map(|p| p.constraints.center()).collect()
    }
}
