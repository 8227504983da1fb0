//! Observation CSV: `obs_id,player_id,action[,known_w0,known_w1,...]`.
//!
//! One row per participating player, rows of an observation contiguous,
//! player ids 0-based. The optional `known_w*` columns carry that row's
//! known-part weights; blank cells end the list.

use std::collections::HashSet;
use std::path::Path;

use crate::estimation::{Entry, Observation, ObservationSet};
use crate::forecast::Forecast;
use crate::{Error, Result};

const BASE_HEADER: [&str; 3] = ["obs_id", "player_id", "action"];

pub fn parse_observations(text: &str, context: &str) -> Result<ObservationSet> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::parse(context, e))?
        .clone();
    if header.len() < 3 || header.iter().take(3).ne(BASE_HEADER) {
        return Err(Error::parse(
            context,
            format!("header must start with obs_id,player_id,action, got '{}'", header.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    for (k, name) in header.iter().enumerate().skip(3) {
        if name != format!("known_w{}", k - 3) {
            return Err(Error::parse(context, format!("unexpected column '{name}'")));
        }
    }

    let mut records: Vec<Observation> = Vec::new();
    let mut current: Option<(u64, Vec<Entry>)> = None;
    let mut finished = HashSet::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::parse(context, e))?;
        let at = |m: String| Error::parse(context, format!("data row {}: {m}", line + 1));
        let id: u64 = row[0].parse().map_err(|_| at(format!("bad obs_id '{}'", &row[0])))?;
        let player: usize = row[1].parse().map_err(|_| at(format!("bad player_id '{}'", &row[1])))?;
        let action: f64 = row[2].parse().map_err(|_| at(format!("bad action '{}'", &row[2])))?;
        let mut weights = Vec::new();
        for cell in row.iter().skip(3) {
            if cell.is_empty() {
                break;
            }
            weights.push(cell.parse::<f64>().map_err(|_| at(format!("bad known weight '{cell}'")))?);
        }
        let entry = if weights.is_empty() {
            Entry::new(player, action)
        } else {
            Entry::with_known_weights(player, action, weights)
        };
        match &mut current {
            Some((cid, entries)) if *cid == id => entries.push(entry),
            _ => {
                if let Some((cid, entries)) = current.take() {
                    finished.insert(cid);
                    records.push(Observation::new(cid, entries)?);
                }
                if finished.contains(&id) {
                    return Err(at(format!("rows of observation {id} are not contiguous")));
                }
                current = Some((id, vec![entry]));
            }
        }
    }
    if let Some((cid, entries)) = current {
        records.push(Observation::new(cid, entries)?);
    }
    ObservationSet::new(records)
}

pub fn read_observations(path: &Path) -> Result<ObservationSet> {
    let text = super::read_to_string(path)?;
    parse_observations(&text, &path.display().to_string())
}

pub fn write_observations(obs: &ObservationSet) -> Result<String> {
    let k = obs
        .records()
        .iter()
        .flat_map(|r| r.known_weights())
        .map(|w| w.as_ref().map_or(0, Vec::len))
        .max()
        .unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = BASE_HEADER.iter().map(|s| s.to_string()).collect();
    header.extend((0..k).map(|j| format!("known_w{j}")));
    let err = |e: csv::Error| Error::parse("observation output", e);
    w.write_record(&header).map_err(err)?;
    for r in obs.records() {
        for e in r.entries() {
            let mut row = vec![r.id().to_string(), e.player.to_string(), e.action.to_string()];
            let weights = e.known_weights.unwrap_or_default();
            row.extend((0..k).map(|j| weights.get(j).map_or_else(String::new, |v| v.to_string())));
            w.write_record(&row).map_err(err)?;
        }
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::parse("csv output", e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::parse("csv output", e))
}

/// `obs_id,player_id,predicted,actual,converged`.
pub fn write_predictions(fc: &Forecast, test: &ObservationSet) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::parse("prediction output", e);
    w.write_record(["obs_id", "player_id", "predicted", "actual", "converged"])
        .map_err(err)?;
    for (p, o) in fc.predictions.iter().zip(test.records()) {
        for ((&i, &pred), &act) in p.players.iter().zip(&p.actions).zip(o.actions()) {
            w.write_record([
                p.obs_id.to_string(),
                i.to_string(),
                pred.to_string(),
                act.to_string(),
                p.converged.to_string(),
            ])
            .map_err(err)?;
        }
    }
    finish(w)
}

/// Reads a prediction file back; only `obs_id`, `player_id` and `predicted`
/// are required (an observation CSV with `predicted` in place of `action`).
pub fn read_predictions(path: &Path) -> Result<Vec<(u64, usize, f64)>> {
    let text = super::read_to_string(path)?;
    let ctx = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::parse(&ctx, e))?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(&ctx, format!("missing column '{name}'")))
    };
    let (ci, cp, cv) = (col("obs_id")?, col("player_id")?, col("predicted")?);
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::parse(&ctx, e))?;
        let bad = |what: &str| Error::parse(&ctx, format!("bad {what} in prediction file"));
        out.push((
            row[ci].parse().map_err(|_| bad("obs_id"))?,
            row[cp].parse().map_err(|_| bad("player_id"))?,
            row[cv].parse().map_err(|_| bad("predicted"))?,
        ));
    }
    Ok(out)
}
