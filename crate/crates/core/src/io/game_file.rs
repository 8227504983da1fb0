//! JSON game description.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "players": [
//!     {
//!       "name": "a",
//!       "bounds": { "lower": 0.0, "upper": 20.0 },
//!       "basis": [
//!         { "kind": "own_quadratic", "weight": -1.0, "upper": -1e-6 },
//!         { "kind": "cross_bilinear", "weight": 0.3 }
//!       ],
//!       "known_part": [
//!         { "kind": "own_linear", "weight": 10.0, "incentive_range": [5.0, 15.0] }
//!       ],
//!       "known_scale": 1.0
//!     }
//!   ]
//! }
//! ```
//!
//! A basis entry without `weight` (or with `null`) is to be estimated and
//! starts at 0 (or at `fixed` when given). `lower`/`upper`/`fixed` are the
//! prior information used by the estimators.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::estimation::ThetaBound;
use crate::game::{Basis, ConstraintSet, Game, KnownTerm, Player, UtilitySpec};
use crate::{Error, Result, FORMAT_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisEntry {
    #[serde(flatten)]
    pub basis: Basis,
    #[serde(default)]
    pub weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownEntry {
    #[serde(flatten)]
    pub basis: Basis,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incentive_range: Option<[f64; 2]>,
}

fn one() -> f64 {
    1.0
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub bounds: ConstraintSet,
    #[serde(default)]
    pub basis: Vec<BasisEntry>,
    #[serde(default)]
    pub known_part: Vec<KnownEntry>,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub known_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameFile {
    pub format_version: u32,
    pub players: Vec<PlayerEntry>,
}

/// A game together with its estimation metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct GameModel {
    pub game: Game,
    pub theta_bounds: Vec<Vec<ThetaBound>>,
    /// Per player and known term, the range incentives are drawn from in simulation.
    pub incentive_ranges: Vec<Vec<Option<[f64; 2]>>>,
    /// Whether each basis weight was given in the file.
    pub weight_given: Vec<Vec<bool>>,
    pub names: Vec<Option<String>>,
}

impl GameFile {
    pub fn into_model(self) -> Result<GameModel> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::parse(
                "game file",
                format!("unsupported format_version {}", self.format_version),
            ));
        }
        let mut players = Vec::new();
        let (mut theta_bounds, mut incentive_ranges, mut weight_given, mut names) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (i, p) in self.players.into_iter().enumerate() {
            let mut bounds = Vec::new();
            let mut theta = Vec::new();
            for b in &p.basis {
                let tb = ThetaBound {
                    lower: b.lower,
                    upper: b.upper,
                    fixed: b.fixed,
                };
                if let (Some(l), Some(u)) = (b.lower, b.upper) {
                    if l > u {
                        return Err(Error::Infeasible(format!("player {i}: basis bounds [{l}, {u}]")));
                    }
                }
                bounds.push(tb);
                theta.push(b.fixed.or(b.weight).unwrap_or(0.0));
            }
            for k in &p.known_part {
                if let Some([a, b]) = k.incentive_range {
                    if !(a.is_finite() && b.is_finite() && a <= b) {
                        return Err(Error::Invalid(format!("player {i}: incentive range [{a}, {b}]")));
                    }
                }
            }
            let known = p
                .known_part
                .iter()
                .map(|k| KnownTerm {
                    basis: k.basis,
                    weight: k.weight,
                })
                .collect();
            let utility = UtilitySpec::new(p.basis.iter().map(|b| b.basis).collect(), theta, known)?
                .with_known_scale(p.known_scale)?;
            players.push(Player {
                utility,
                constraints: ConstraintSet::new(p.bounds.lower, p.bounds.upper)?,
            });
            theta_bounds.push(bounds);
            incentive_ranges.push(p.known_part.iter().map(|k| k.incentive_range).collect());
            weight_given.push(p.basis.iter().map(|b| b.weight.is_some() || b.fixed.is_some()).collect());
            names.push(p.name);
        }
        Ok(GameModel {
            game: Game::new(players)?,
            theta_bounds,
            incentive_ranges,
            weight_given,
            names,
        })
    }
}

impl GameModel {
    pub fn parse(text: &str) -> Result<Self> {
        let file: GameFile = serde_json::from_str(text).map_err(|e| Error::parse("game file", e))?;
        file.into_model()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = super::read_to_string(path)?;
        let file: GameFile = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path.display().to_string(), e))?;
        file.into_model()
    }

    pub fn len(&self) -> usize {
        self.game.len()
    }

    pub fn is_empty(&self) -> bool {
        self.game.is_empty()
    }

    /// Whether every basis weight is known (needed to simulate).
    pub fn fully_specified(&self) -> bool {
        self.weight_given.iter().flatten().all(|&g| g)
    }

    /// Same model with player `i`'s utility replaced; weights become given.
    pub fn with_utility(&self, i: usize, utility: UtilitySpec) -> Result<Self> {
        let mut out = self.clone();
        out.weight_given[i] = vec![true; utility.basis().len()];
        out.game = self.game.with_utility(i, utility)?;
        Ok(out)
    }

    pub fn with_game(&self, game: Game) -> Result<Self> {
        let mut out = self.clone();
        for i in 0..game.len() {
            out = out.with_utility(i, game.players()[i].utility.clone())?;
        }
        Ok(out)
    }

    pub fn to_file(&self) -> GameFile {
        let players = self
            .game
            .players()
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let u = &p.utility;
                PlayerEntry {
                    name: self.names[i].clone(),
                    bounds: p.constraints,
                    basis: u
                        .basis()
                        .iter()
                        .zip(u.theta())
                        .enumerate()
                        .map(|(j, (b, &w))| {
                            let tb = self.theta_bounds[i].get(j).copied().unwrap_or_default();
                            BasisEntry {
                                basis: *b,
                                weight: self.weight_given[i][j].then_some(w),
                                lower: tb.lower,
                                upper: tb.upper,
                                fixed: tb.fixed,
                            }
                        })
                        .collect(),
                    known_part: u
                        .known()
                        .iter()
                        .enumerate()
                        .map(|(t, k)| KnownEntry {
                            basis: k.basis,
                            weight: k.weight,
                            incentive_range: self.incentive_ranges[i][t],
                        })
                        .collect(),
                    known_scale: u.known_scale(),
                }
            })
            .collect();
        GameFile {
            format_version: FORMAT_VERSION,
            players,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        super::to_json(&self.to_file())
    }
}
