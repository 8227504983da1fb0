//! Correlated games: each player's utility mixes the estimated parameters of
//! players whose estimates covary with its own, with per-pair scalings chosen
//! by grid search.
//!
//! For player `i` with coalition `K_i` the correlated utility is
//!
//! ```text
//! g_i = sum_{j in K_i} w_ij (z_ij psi_i + theta_j . phi_i),   w_ij = alpha_ij / c_ij
//! ```
//!
//! where `psi_i` is player `i`'s known part and `phi_i` its own basis.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimation::{theta_label, ObservationSet};
use crate::forecast::{forecast, score_forecast};
use crate::game::{solve_nash, Game, SolverParams, UtilitySpec};
use crate::{Error, Result};

/// Floor on `sigma_ii` so that rows can be normalized.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// Player-level covariances `sigma_ij` read from the estimator covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceView {
    pub sigma: DMatrix<f64>,
    /// Divide row `i` by `sigma_ii` when forming weights.
    pub normalize: bool,
    pub labels: Vec<String>,
}

impl CovarianceView {
    pub fn new(sigma: DMatrix<f64>, normalize: bool) -> Result<Self> {
        if !sigma.is_square() {
            return Err(Error::Dimension("player covariance must be square".into()));
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite player covariance".into()));
        }
        let mut sigma = (&sigma + sigma.transpose()) * 0.5;
        for i in 0..sigma.nrows() {
            sigma[(i, i)] = sigma[(i, i)].max(SIGMA_FLOOR);
        }
        let labels = (0..sigma.nrows()).map(|i| format!("player {i}")).collect();
        Ok(CovarianceView {
            sigma,
            normalize,
            labels,
        })
    }

    /// Sub-block of the coefficient covariance at `theta[i][coords[i]]` for
    /// each player `i`; players without that coefficient get zero rows.
    pub fn from_estimate(cov: &DMatrix<f64>, labels: &[String], coords: &[usize], normalize: bool) -> Result<Self> {
        if cov.nrows() != labels.len() || !cov.is_square() {
            return Err(Error::Dimension("covariance does not match the coefficient layout".into()));
        }
        let idx: Vec<Option<usize>> = coords
            .iter()
            .enumerate()
            .map(|(i, &j)| labels.iter().position(|l| *l == theta_label(i, j)))
            .collect();
        let p = coords.len();
        let sigma = DMatrix::from_fn(p, p, |a, b| match (idx[a], idx[b]) {
            (Some(r), Some(c)) => cov[(r, c)],
            _ => 0.0,
        });
        let mut view = CovarianceView::new(sigma, normalize)?;
        view.labels = coords
            .iter()
            .enumerate()
            .map(|(i, &j)| theta_label(i, j))
            .collect();
        Ok(view)
    }

    pub fn len(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        self.sigma[(i, j)] / (self.sigma[(i, i)] * self.sigma[(j, j)]).sqrt()
    }

    /// `sigma_ij`, divided by `sigma_ii` when normalizing.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if self.normalize {
            self.sigma[(i, j)] / self.sigma[(i, i)]
        } else {
            self.sigma[(i, j)]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignRule {
    /// `z_ij = sign(sigma_ij)`, `z_ii = +1`.
    #[default]
    CovarianceSign,
    AllPositive,
}

/// One coalition member `j in K_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoalitionTerm {
    pub player: usize,
    pub sign: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub scaling: f64,
}

impl CoalitionTerm {
    pub fn weight(&self) -> f64 {
        self.alpha / self.scaling
    }
}

/// Per-player coalitions, each sorted by member index and containing the owner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalitionSpec {
    pub coalitions: Vec<Vec<CoalitionTerm>>,
}

impl CoalitionSpec {
    /// Every player alone with unit weight.
    pub fn singletons(p: usize) -> Self {
        CoalitionSpec {
            coalitions: (0..p)
                .map(|i| {
                    vec![CoalitionTerm {
                        player: i,
                        sign: 1.0,
                        sigma: 1.0,
                        alpha: 1.0,
                        scaling: 1.0,
                    }]
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.coalitions.len();
        for (i, k) in self.coalitions.iter().enumerate() {
            if !k.iter().any(|t| t.player == i) {
                return Err(Error::Invalid(format!("coalition of player {i} does not contain it")));
            }
            if k.windows(2).any(|w| w[0].player >= w[1].player) {
                return Err(Error::Invalid(format!("coalition of player {i} is not strictly sorted")));
            }
            for t in k {
                if t.player >= p {
                    return Err(Error::Invalid(format!("coalition member {} out of range", t.player)));
                }
                if !(t.scaling > 0.0 && t.scaling.is_finite()) {
                    return Err(Error::Invalid(format!(
                        "scaling c[{i}][{}] = {} must be positive",
                        t.player, t.scaling
                    )));
                }
                if t.sign != 1.0 && t.sign != -1.0 {
                    return Err(Error::Invalid("sign factors must be +1 or -1".into()));
                }
            }
        }
        Ok(())
    }

    /// `(i, j)` for every coalition member, in lexicographic order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.coalitions
            .iter()
            .enumerate()
            .flat_map(|(i, k)| k.iter().map(move |t| (i, t.player)))
            .collect()
    }

    pub fn with_scalings(&self, c: &BTreeMap<(usize, usize), f64>) -> Result<Self> {
        let mut out = self.clone();
        for (i, k) in out.coalitions.iter_mut().enumerate() {
            for t in k.iter_mut() {
                if let Some(&v) = c.get(&(i, t.player)) {
                    t.scaling = v;
                }
            }
        }
        out.validate()?;
        Ok(out)
    }

    pub fn is_singleton(&self) -> bool {
        self.coalitions.iter().all(|k| k.len() == 1)
    }
}

/// `K_i = {i} + {j : |rho_ij| >= threshold}` with `alpha_ij` the view's weight.
pub fn select_coalitions(cov: &CovarianceView, threshold: f64, rule: SignRule) -> Result<CoalitionSpec> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Invalid(format!("threshold {threshold} is outside (0, 1)")));
    }
    let p = cov.len();
    let coalitions = (0..p)
        .map(|i| {
            (0..p)
                .filter(|&j| j == i || cov.correlation(i, j).abs() >= threshold)
                .map(|j| CoalitionTerm {
                    player: j,
                    sign: match rule {
                        _ if j == i => 1.0,
                        SignRule::AllPositive => 1.0,
                        SignRule::CovarianceSign => {
                            if cov.sigma[(i, j)] < 0.0 {
                                -1.0
                            } else {
                                1.0
                            }
                        }
                    },
                    sigma: cov.sigma[(i, j)],
                    alpha: cov.weight(i, j),
                    scaling: 1.0,
                })
                .collect()
        })
        .collect();
    Ok(CoalitionSpec { coalitions })
}

/// Player `i`'s correlated utility over its own basis and known part.
pub fn build_correlated_utility(
    base: &Game,
    estimates: &[Vec<f64>],
    coalition: &CoalitionSpec,
    i: usize,
) -> Result<UtilitySpec> {
    let own = &base.player(i)?.utility;
    let terms = coalition
        .coalitions
        .get(i)
        .ok_or_else(|| Error::Invalid(format!("no coalition for player {i}")))?;
    let m = own.basis().len();
    let mut theta = vec![0.0; m];
    let mut scale = 0.0;
    for t in terms {
        if t.player >= base.len() {
            return Err(Error::Invalid(format!(
                "coalition member {} not in a {}-player game",
                t.player,
                base.len()
            )));
        }
        let est = estimates
            .get(t.player)
            .ok_or_else(|| Error::Invalid(format!("no estimate for player {}", t.player)))?;
        if est.len() != m {
            return Err(Error::Dimension(format!(
                "player {} has {} coefficients but player {i} has {m} basis functions",
                t.player,
                est.len()
            )));
        }
        let w = t.weight();
        for (acc, e) in theta.iter_mut().zip(est) {
            *acc += w * e;
        }
        scale += w * t.sign;
    }
    own.with_theta(theta)?
        .with_known_scale(own.known_scale() * scale)
}

pub fn build_correlated_game(base: &Game, estimates: &[Vec<f64>], coalition: &CoalitionSpec) -> Result<Game> {
    coalition.validate()?;
    if coalition.coalitions.len() != base.len() {
        return Err(Error::Dimension("one coalition per player required".into()));
    }
    let mut game = base.clone();
    for i in 0..base.len() {
        game = game.with_utility(i, build_correlated_utility(base, estimates, coalition, i)?)?;
    }
    Ok(game)
}

/// Scaling values per coalition pair; pairs not listed use `default`, then 1.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(default)]
    pub pairs: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Vec<f64>>,
}

fn parse_values(s: &str) -> Result<Vec<f64>> {
    let bad = |m: &str| Error::Usage(format!("grid values '{s}': {m}"));
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad("not a number"));
    let parts: Vec<&str> = s.split(':').collect();
    let values = match parts.len() {
        1 => s.split(',').map(num).collect::<Result<Vec<_>>>()?,
        3 => {
            let (a, b, h) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
            if !(h > 0.0) || b < a {
                return Err(bad("range needs start <= stop and a positive step"));
            }
            let n = ((b - a) / h + 1e-9).floor() as usize;
            if n > 100_000 {
                return Err(bad("range too long"));
            }
            (0..=n).map(|k| a + k as f64 * h).collect()
        }
        _ => return Err(bad("expected a list or start:stop:step")),
    };
    if values.is_empty() || values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(bad("scalings must be positive"));
    }
    Ok(values)
}

fn parse_pair(key: &str) -> Result<(usize, usize)> {
    let mut it = key.split(',').map(|t| t.trim().parse::<usize>());
    match (it.next(), it.next(), it.next()) {
        (Some(Ok(i)), Some(Ok(j)), None) => Ok((i, j)),
        _ => Err(Error::Usage(format!("grid key '{key}' is not 'i,j' or '*'"))),
    }
}

impl GridSpec {
    /// Parses `"0,1=0.5,1,2;*=0.5:2:0.5"`: `;`-separated `key=values` items
    /// with keys `i,j` or `*` and values a comma list or inclusive range.
    pub fn parse(s: &str) -> Result<Self> {
        let mut spec = GridSpec::default();
        for item in s.split(';').map(str::trim).filter(|t| !t.is_empty()) {
            let (key, vals) = item
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("grid item '{item}' lacks '='")))?;
            let values = parse_values(vals.trim())?;
            let key = key.trim();
            if key == "*" {
                spec.default = Some(values);
            } else {
                let (i, j) = parse_pair(key)?;
                spec.pairs.insert(format!("{i},{j}"), values);
            }
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for k in self.pairs.keys() {
            parse_pair(k)?;
        }
        for v in self.pairs.values().chain(self.default.iter()) {
            if v.is_empty() || v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(Error::Usage("grid scalings must be positive".into()));
            }
        }
        Ok(())
    }

    /// Sorted, de-duplicated values for every coalition pair.
    pub fn dimensions(&self, coalition: &CoalitionSpec) -> Result<Vec<((usize, usize), Vec<f64>)>> {
        self.validate()?;
        let pairs = coalition.pairs();
        for k in self.pairs.keys() {
            let pair = parse_pair(k)?;
            if !pairs.contains(&pair) {
                return Err(Error::Invalid(format!("grid pair {k} is not a coalition member")));
            }
        }
        Ok(pairs
            .into_iter()
            .map(|(i, j)| {
                let mut v = self
                    .pairs
                    .get(&format!("{i},{j}"))
                    .or(self.default.as_ref())
                    .cloned()
                    .unwrap_or_else(|| vec![1.0]);
                v.sort_by(f64::total_cmp);
                v.dedup();
                ((i, j), v)
            })
            .collect())
    }
}

/// All cells of the Cartesian grid in lexicographic order.
pub fn grid_cells(dims: &[((usize, usize), Vec<f64>)]) -> Vec<Vec<f64>> {
    let mut cells = vec![Vec::new()];
    for (_, values) in dims {
        cells = cells
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |&v| {
                    let mut c = prefix.clone();
                    c.push(v);
                    c
                })
            })
            .collect();
    }
    cells
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    pub scalings: Vec<f64>,
    pub point: Vec<f64>,
    pub converged: bool,
    pub rmse: Option<f64>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResult {
    pub pairs: Vec<(usize, usize)>,
    pub cells: Vec<GridCell>,
    /// Index of the best non-flagged cell.
    pub best: Option<usize>,
}

impl GridResult {
    pub fn best_scalings(&self) -> Option<BTreeMap<(usize, usize), f64>> {
        self.best.map(|b| {
            self.pairs
                .iter()
                .copied()
                .zip(self.cells[b].scalings.iter().copied())
                .collect()
        })
    }
}

/// Evaluates one grid cell: Nash point of the correlated game from `x0`
/// and the held-out forecast RMSE.
pub fn evaluate_cell(
    base: &Game,
    estimates: &[Vec<f64>],
    coalition: &CoalitionSpec,
    pairs: &[(usize, usize)],
    scalings: &[f64],
    eval: &ObservationSet,
    params: &SolverParams,
    x0: &[f64],
) -> Result<GridCell> {
    let c: BTreeMap<_, _> = pairs.iter().copied().zip(scalings.iter().copied()).collect();
    let game = build_correlated_game(base, estimates, &coalition.with_scalings(&c)?)?;
    let flagged_cell = |point: Vec<f64>, converged: bool| GridCell {
        scalings: scalings.to_vec(),
        point,
        converged,
        rmse: None,
        flagged: true,
    };
    let report = match solve_nash(&game, x0, params) {
        Ok(r) => r,
        Err(Error::Numerical(_)) | Err(Error::Domain(_)) => return Ok(flagged_cell(vec![f64::NAN; x0.len()], false)),
        Err(e) => return Err(e),
    };
    if !report.converged {
        return Ok(flagged_cell(report.point, false));
    }
    let fc = forecast(&game, eval, params, Some(x0))?;
    let metrics = score_forecast(&fc, eval, &[])?;
    let flagged = fc.n_failed > 0 || metrics.rmse.is_none();
    Ok(GridCell {
        scalings: scalings.to_vec(),
        point: report.point,
        converged: true,
        rmse: metrics.rmse,
        flagged,
    })
}

/// Every grid cell in lexicographic order, and the first cell with minimal RMSE.
pub fn grid_search_scalings(
    base: &Game,
    estimates: &[Vec<f64>],
    coalition: &CoalitionSpec,
    grid: &GridSpec,
    eval: &ObservationSet,
    params: &SolverParams,
    x0: &[f64],
) -> Result<GridResult> {
    let dims = grid.dimensions(coalition)?;
    let pairs: Vec<(usize, usize)> = dims.iter().map(|d| d.0).collect();
    let cells = grid_cells(&dims)
        .par_iter()
        .map(|c| evaluate_cell(base, estimates, coalition, &pairs, c, eval, params, x0))
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<usize> = None;
    for (k, cell) in cells.iter().enumerate() {
        if cell.flagged {
            continue;
        }
        let r = cell.rmse.expect("unflagged cells carry an RMSE");
        if best.is_none_or(|b| r < cells[b].rmse.expect("best is unflagged")) {
            best = Some(k);
        }
    }
    Ok(GridResult { pairs, cells, best })
}
