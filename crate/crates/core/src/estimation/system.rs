//! Stacked KKT-residual regression `Y = X beta + eps`.
//!
//! For player `i` at observation `k` the block of rows is
//!
//! ```text
//! X_i^(k) = [ D_i h_i(x_i)   D_i phi_i(x) ]     Y_i^(k) = [ -D_i fbar_i(x) ]
//!           [ diag h_i(x_i)  0            ]               [ 0             ]
//! ```
//!
//! so that `Y - X beta` stacks `-(r_s, r_c)`: the stationarity residual
//! `D_i f_i + sum_j mu_j D_i h_j` and the complementarity residuals `mu_j h_j`.
//! `beta` is laid out player by player as `(mu_i^1 .. mu_i^{l_i}, theta_i)`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::observations::ObservationSet;
use crate::game::{ActionContext, Game};
use crate::{Error, Result};

/// Prior information `Theta_i` on one coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThetaBound {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<f64>,
}

impl ThetaBound {
    pub fn free() -> Self {
        ThetaBound::default()
    }

    pub fn fixed(value: f64) -> Self {
        ThetaBound {
            fixed: Some(value),
            ..ThetaBound::default()
        }
    }

    pub fn at_most(upper: f64) -> Self {
        ThetaBound {
            upper: Some(upper),
            ..ThetaBound::default()
        }
    }

    pub fn at_least(lower: f64) -> Self {
        ThetaBound {
            lower: Some(lower),
            ..ThetaBound::default()
        }
    }

    fn interval(&self) -> (f64, f64) {
        match self.fixed {
            Some(v) => (v, v),
            None => (
                self.lower.unwrap_or(f64::NEG_INFINITY),
                self.upper.unwrap_or(f64::INFINITY),
            ),
        }
    }
}

/// Box `lower <= beta <= upper`; equal ends fix a coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSet {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl FeasibleSet {
    pub fn unbounded(n: usize) -> Self {
        FeasibleSet {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(Error::Dimension("feasible-set bound lengths differ".into()));
        }
        for (j, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u || *l == f64::INFINITY || *u == f64::NEG_INFINITY {
                return Err(Error::Infeasible(format!(
                    "coefficient {j} has empty range [{l}, {u}]"
                )));
            }
        }
        Ok(())
    }

    pub fn is_fixed(&self, j: usize) -> bool {
        self.lower[j] == self.upper[j]
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| !self.is_fixed(j)).collect()
    }

    pub fn fixed_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.is_fixed(j)).collect()
    }

    /// Euclidean projection onto the box.
    pub fn project(&self, beta: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            beta.len(),
            beta.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .map(|(&b, (&l, &u))| b.max(l).min(u)),
        )
    }

    pub fn contains(&self, beta: &DVector<f64>, tol: f64) -> bool {
        beta.len() == self.len()
            && beta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .enumerate()
                .all(|(j, (&b, (&l, &u)))| {
                    if self.is_fixed(j) {
                        b == l
                    } else {
                        b >= l - tol && b <= u + tol
                    }
                })
    }
}

/// Placement of one player's coefficients and rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerBlock {
    /// Index of the player in the game (or 0 for a generic design).
    pub player: usize,
    pub n_constraints: usize,
    pub n_theta: usize,
    pub col_offset: usize,
    pub row_offset: usize,
    /// Observation positions contributing rows, in row order.
    pub records: Vec<usize>,
}

impl PlayerBlock {
    pub fn rows_per_obs(&self) -> usize {
        self.n_constraints + 1
    }

    pub fn n_rows(&self) -> usize {
        self.rows_per_obs() * self.records.len()
    }

    pub fn rows(&self) -> Range<usize> {
        self.row_offset..self.row_offset + self.n_rows()
    }

    pub fn mu_cols(&self) -> Range<usize> {
        self.col_offset..self.col_offset + self.n_constraints
    }

    pub fn theta_cols(&self) -> Range<usize> {
        let start = self.col_offset + self.n_constraints;
        start..start + self.n_theta
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub blocks: Vec<PlayerBlock>,
    pub labels: Vec<String>,
}

impl Layout {
    pub fn block_for(&self, player: usize) -> Option<&PlayerBlock> {
        self.blocks.iter().find(|b| b.player == player)
    }

    pub fn theta_of<'a>(&self, player: usize, beta: &'a DVector<f64>) -> Option<&'a [f64]> {
        self.block_for(player)
            .map(|b| &beta.as_slice()[b.theta_cols()])
    }

    pub fn mu_of<'a>(&self, player: usize, beta: &'a DVector<f64>) -> Option<&'a [f64]> {
        self.block_for(player).map(|b| &beta.as_slice()[b.mu_cols()])
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

pub fn theta_label(player: usize, j: usize) -> String {
    format!("theta[{player}][{j}]")
}

pub fn mu_label(player: usize, constraint: &str) -> String {
    format!("mu[{player}][{constraint}]")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSystem {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub layout: Layout,
    pub feasible: FeasibleSet,
    /// Observation position of every row.
    pub row_records: Vec<usize>,
    pub warnings: Vec<String>,
}

impl RegressionSystem {
    /// A generic one-block system from an arbitrary design, one row per record.
    pub fn from_design(x: DMatrix<f64>, y: DVector<f64>, feasible: FeasibleSet) -> Result<Self> {
        if x.nrows() != y.len() || feasible.len() != x.ncols() {
            return Err(Error::Dimension(format!(
                "design {}x{}, response {}, feasible set {}",
                x.nrows(),
                x.ncols(),
                y.len(),
                feasible.len()
            )));
        }
        feasible.validate()?;
        let n = x.nrows();
        let c = x.ncols();
        let sys = RegressionSystem {
            layout: Layout {
                blocks: vec![PlayerBlock {
                    player: 0,
                    n_constraints: 0,
                    n_theta: c,
                    col_offset: 0,
                    row_offset: 0,
                    records: (0..n).collect(),
                }],
                labels: (0..c).map(|j| theta_label(0, j)).collect(),
            },
            x,
            y,
            feasible,
            row_records: (0..n).collect(),
            warnings: Vec::new(),
        };
        sys.check()?;
        Ok(sys)
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.ncols()
    }

    fn check(&self) -> Result<()> {
        if self.x.iter().chain(self.y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("regression system has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn residuals(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.y - &self.x * beta
    }

    pub fn sum_sq_residuals(&self, beta: &DVector<f64>) -> f64 {
        self.residuals(beta).norm_squared()
    }

    pub fn with_y(&self, y: DVector<f64>) -> Result<Self> {
        if y.len() != self.n_rows() {
            return Err(Error::Dimension(format!(
                "response of length {} for {} rows",
                y.len(),
                self.n_rows()
            )));
        }
        let mut out = self.clone();
        out.y = y;
        out.check()?;
        Ok(out)
    }

    /// Distinct observation positions, in first-appearance order.
    pub fn records(&self) -> Vec<usize> {
        let mut seen = std::collections::BTreeSet::new();
        self.row_records
            .iter()
            .copied()
            .filter(|r| seen.insert(*r))
            .collect()
    }

    pub fn rows_of(&self, keep: impl Fn(usize) -> bool) -> Vec<usize> {
        (0..self.n_rows())
            .filter(|&r| keep(self.row_records[r]))
            .collect()
    }

    /// Sub-system made of the rows of the observations accepted by `keep`,
    /// with the same columns, labels and feasible set.
    pub fn subset(&self, keep: impl Fn(usize) -> bool) -> Self {
        let mut rows = Vec::new();
        let mut blocks = Vec::with_capacity(self.layout.blocks.len());
        for b in &self.layout.blocks {
            let r = b.rows_per_obs();
            let row_offset = rows.len();
            let mut records = Vec::new();
            for (k, &rec) in b.records.iter().enumerate() {
                if keep(rec) {
                    records.push(rec);
                    rows.extend(b.row_offset + k * r..b.row_offset + (k + 1) * r);
                }
            }
            blocks.push(PlayerBlock {
                row_offset,
                records,
                ..b.clone()
            });
        }
        RegressionSystem {
            x: self.x.select_rows(&rows),
            y: self.y.select_rows(&rows),
            layout: Layout {
                blocks,
                labels: self.layout.labels.clone(),
            },
            feasible: self.feasible.clone(),
            row_records: rows.iter().map(|&r| self.row_records[r]).collect(),
            warnings: self.warnings.clone(),
        }
    }
}

/// Builds the stacked regression from equilibrium observations.
///
/// `theta_bounds[i]` lists per-coefficient prior information for player `i`;
/// an empty list leaves every coefficient free. The weights currently stored
/// in `game` are ignored. Players without observations get no columns and a
/// warning.
pub fn assemble_system(
    game: &Game,
    theta_bounds: &[Vec<ThetaBound>],
    obs: &ObservationSet,
) -> Result<RegressionSystem> {
    if obs.is_empty() {
        return Err(Error::Empty("no observations to assemble".into()));
    }
    if theta_bounds.len() != game.len() {
        return Err(Error::Dimension(format!(
            "theta bounds for {} players in a {}-player game",
            theta_bounds.len(),
            game.len()
        )));
    }
    obs.validate(game)?;
    let counts = obs.counts(game.len());
    let mut warnings = Vec::new();
    let mut blocks = Vec::new();
    let mut labels = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let (mut n_rows, mut n_cols) = (0, 0);

    for (i, player) in game.players().iter().enumerate() {
        if counts[i] == 0 {
            warnings.push(format!("player {i} has no observations and is dropped"));
            continue;
        }
        let m = player.utility.basis().len();
        let bounds = &theta_bounds[i];
        if !bounds.is_empty() && bounds.len() != m {
            return Err(Error::Dimension(format!(
                "player {i}: {} theta bounds for {m} basis functions",
                bounds.len()
            )));
        }
        let constraints = player.constraints.constraints();
        for h in &constraints {
            labels.push(mu_label(i, h.name()));
            lower.push(0.0);
            upper.push(f64::INFINITY);
        }
        for j in 0..m {
            labels.push(theta_label(i, j));
            let (l, u) = bounds.get(j).copied().unwrap_or_default().interval();
            lower.push(l);
            upper.push(u);
        }
        let records: Vec<usize> = obs
            .records()
            .iter()
            .enumerate()
            .filter(|(_, r)| r.position(i).is_some())
            .map(|(k, _)| k)
            .collect();
        let block = PlayerBlock {
            player: i,
            n_constraints: constraints.len(),
            n_theta: m,
            col_offset: n_cols,
            row_offset: n_rows,
            records,
        };
        n_rows += block.n_rows();
        n_cols += constraints.len() + m;
        blocks.push(block);
    }
    if blocks.is_empty() {
        return Err(Error::Empty("no player has observations".into()));
    }

    let mut x = DMatrix::zeros(n_rows, n_cols);
    let mut y = DVector::zeros(n_rows);
    let mut row_records = vec![0; n_rows];
    for b in &blocks {
        let player = &game.players()[b.player];
        let constraints = player.constraints.constraints();
        for (k, &rec) in b.records.iter().enumerate() {
            let record = &obs.records()[rec];
            let pos = record.position(b.player).expect("record selected for player");
            let xs = record.actions();
            let xi = xs[pos];
            let row = b.row_offset + k * b.rows_per_obs();
            row_records[row..row + b.rows_per_obs()].fill(rec);

            let utility = match &record.known_weights()[pos] {
                Some(w) => player.utility.with_known_weights(w)?,
                None => player.utility.clone(),
            };
            let ctx = ActionContext::new(xs, pos)?;
            for (j, h) in constraints.iter().enumerate() {
                x[(row, b.col_offset + j)] = h.derivative();
                x[(row + 1 + j, b.col_offset + j)] = h.value(xi);
            }
            for (j, basis) in utility.basis().iter().enumerate() {
                x[(row, b.theta_cols().start + j)] = basis.d_own_at(ctx)?;
            }
            y[row] = -utility.known_d_own(xs, pos)?;
        }
    }
    let feasible = FeasibleSet { lower, upper };
    feasible.validate()?;
    let sys = RegressionSystem {
        x,
        y,
        layout: Layout { blocks, labels },
        feasible,
        row_records,
        warnings,
    };
    sys.check()?;
    Ok(sys)
}
