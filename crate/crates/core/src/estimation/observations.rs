use std::collections::HashSet;

use crate::game::Game;
use crate::{Error, Result};

/// One observed play: the participating players, their actions, and optional
/// per-player overrides of the known-part weights (e.g. that period's incentive).
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    id: u64,
    players: Vec<usize>,
    actions: Vec<f64>,
    known_weights: Vec<Option<Vec<f64>>>,
}

/// One participant's entry in an [`Observation`].
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub player: usize,
    pub action: f64,
    pub known_weights: Option<Vec<f64>>,
}

impl Entry {
    pub fn new(player: usize, action: f64) -> Self {
        Entry {
            player,
            action,
            known_weights: None,
        }
    }

    pub fn with_known_weights(player: usize, action: f64, weights: Vec<f64>) -> Self {
        Entry {
            player,
            action,
            known_weights: Some(weights),
        }
    }
}

impl Observation {
    /// Entries are sorted by player index; duplicates are rejected.
    pub fn new(id: u64, mut entries: Vec<Entry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty(format!("observation {id} has no participants")));
        }
        entries.sort_by_key(|e| e.player);
        if entries.windows(2).any(|w| w[0].player == w[1].player) {
            return Err(Error::Invalid(format!(
                "observation {id} lists a player twice"
            )));
        }
        if entries.iter().any(|e| !e.action.is_finite()) {
            return Err(Error::Invalid(format!("observation {id} has a non-finite action")));
        }
        Ok(Observation {
            id,
            players: entries.iter().map(|e| e.player).collect(),
            actions: entries.iter().map(|e| e.action).collect(),
            known_weights: entries.into_iter().map(|e| e.known_weights).collect(),
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    /// Participant set `S^k`, ascending.
    pub fn players(&self) -> &[usize] {
        &self.players
    }

    /// Joint action over the participants, aligned with [`Self::players`].
    pub fn actions(&self) -> &[f64] {
        &self.actions
    }

    pub fn known_weights(&self) -> &[Option<Vec<f64>>] {
        &self.known_weights
    }

    pub fn position(&self, player: usize) -> Option<usize> {
        self.players.binary_search(&player).ok()
    }

    pub fn action_of(&self, player: usize) -> Option<f64> {
        self.position(player).map(|k| self.actions[k])
    }

    pub fn entries(&self) -> impl Iterator<Item = Entry> + '_ {
        self.players
            .iter()
            .zip(&self.actions)
            .zip(&self.known_weights)
            .map(|((&player, &action), w)| Entry {
                player,
                action,
                known_weights: w.clone(),
            })
    }

    /// The game actually played at this observation: restricted to the
    /// participants, with the recorded known-part weights substituted.
    pub fn instance(&self, game: &Game) -> Result<Game> {
        let mut sub = game.restrict(&self.players)?;
        for (pos, weights) in self.known_weights.iter().enumerate() {
            if let Some(w) = weights {
                let u = sub.players()[pos].utility.with_known_weights(w)?;
                sub = sub.with_utility(pos, u)?;
            }
        }
        Ok(sub)
    }
}

/// An ordered collection of observations with unique ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservationSet {
    records: Vec<Observation>,
}

impl ObservationSet {
    pub fn new(records: Vec<Observation>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.id) {
                return Err(Error::Invalid(format!("duplicate observation id {}", r.id)));
            }
        }
        Ok(ObservationSet { records })
    }

    pub fn records(&self) -> &[Observation] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `n_i` for each of `p` players.
    pub fn counts(&self, p: usize) -> Vec<usize> {
        let mut n = vec![0; p];
        for r in &self.records {
            for &i in &r.players {
                if i < p {
                    n[i] += 1;
                }
            }
        }
        n
    }

    /// Checks player indices, constraint membership and known-weight lengths.
    pub fn validate(&self, game: &Game) -> Result<()> {
        for r in &self.records {
            for e in r.entries() {
                let player = game.player(e.player).map_err(|_| {
                    Error::Invalid(format!(
                        "observation {} references player {} of a {}-player game",
                        r.id,
                        e.player,
                        game.len()
                    ))
                })?;
                if !player.constraints.contains(e.action) {
                    return Err(Error::Invalid(format!(
                        "observation {}: action {} of player {} violates its constraints",
                        r.id, e.action, e.player
                    )));
                }
                if let Some(w) = &e.known_weights {
                    if w.len() != player.utility.known().len() {
                        return Err(Error::Dimension(format!(
                            "observation {}: {} known weights for player {} with {} known terms",
                            r.id,
                            w.len(),
                            e.player,
                            player.utility.known().len()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Observations at the given positions, in the given order.
    pub fn select(&self, positions: &[usize]) -> Result<ObservationSet> {
        let records = positions
            .iter()
            .map(|&k| {
                self.records
                    .get(k)
                    .cloned()
                    .ok_or_else(|| Error::Invalid(format!("no observation at position {k}")))
            })
            .collect::<Result<Vec<_>>>()?;
        ObservationSet::new(records)
    }

    /// Each player's actions in observation order.
    pub fn player_series(&self, p: usize) -> Vec<Vec<f64>> {
        let mut series = vec![Vec::new(); p];
        for r in &self.records {
            for (&i, &a) in r.players.iter().zip(&r.actions) {
                if i < p {
                    series[i].push(a);
                }
            }
        }
        series
    }
}
