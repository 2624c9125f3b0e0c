//! Conversion of the public two-player human gameplay logs into
//! [`TrajectoryDataset`] episodes.
//!
//! Importer contract. The raw input is a JSON array of per-timestep rows (the
//! published CSV/pickle tables dumped as records). Each row carries:
//!
//! * `layout_name`: a bundled layout name or a legacy alias (`random0`,
//!   `random1`, `random3`, `counter_circuit_o_1order`);
//! * `trial_id`: episode key; rows of one trial are kept in file order unless
//!   `cur_gameloop` is present, in which case they are sorted by it;
//! * `state`: an object, or a JSON-encoded string of one, with `players`
//!   (`position: [x, y]`, `orientation: [dx, dy]`, `held_object: {name} | null`)
//!   and `objects` (a list, or a map keyed by position, of `{name, position}`
//!   records; pot soups carry `_ingredients` plus `cooking_tick`, or the older
//!   `state: [kind, onions, elapsed]` triple);
//! * `joint_action`: a two-element array (or JSON string) of `[dx, dy]` moves
//!   or the string `"interact"`;
//! * `score` (optional): the running score.
//!
//! `x` is the column and `y` the row. A trial whose states do not fit the
//! bundled layout is skipped and counted in the summary.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;

use super::bc::{TrajectoryDataset, TrajectoryEpisode};
use super::TrainError;
use crate::kitchen::{canonical_layout, Action, Direction, GameState, Object, PlayerState, Pos, PotState};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ImportSummary {
    pub rows: usize,
    pub episodes: usize,
    /// Trials dropped because a state or action could not be mapped.
    pub skipped: Vec<String>,
}

fn parse_embedded(v: &Value) -> Result<Value, String> {
    match v {
        Value::String(s) => serde_json::from_str(s).map_err(|e| format!("embedded JSON: {e}")),
        other => Ok(other.clone()),
    }
}

pub fn layout_alias(name: &str) -> &str {
    match name {
        "random0" => "forced_coordination",
        "random3" | "counter_circuit_o_1order" => "counter_circuit",
        "random1" => "coordination_ring",
        other => other,
    }
}

fn xy(v: &Value) -> Result<(i64, i64), String> {
    let a = v.as_array().filter(|a| a.len() == 2).ok_or_else(|| format!("expected [x, y], got {v}"))?;
    match (a[0].as_i64(), a[1].as_i64()) {
        (Some(x), Some(y)) => Ok((x, y)),
        _ => Err(format!("expected integer pair, got {v}")),
    }
}

fn pos(v: &Value) -> Result<Pos, String> {
    let (x, y) = xy(v)?;
    Ok(Pos::new(y as i32, x as i32))
}

fn direction(dx: i64, dy: i64) -> Option<Direction> {
    match (dx, dy) {
        (0, -1) => Some(Direction::Up),
        (0, 1) => Some(Direction::Down),
        (-1, 0) => Some(Direction::Left),
        (1, 0) => Some(Direction::Right),
        _ => None,
    }
}

fn action(v: &Value) -> Result<Action, String> {
    if let Some(s) = v.as_str() {
        return match s.to_ascii_lowercase().as_str() {
            "interact" => Ok(Action::Interact),
            "stay" => Ok(Action::Stay),
            _ => Err(format!("unknown action {s}")),
        };
    }
    let (dx, dy) = xy(v)?;
    if (dx, dy) == (0, 0) {
        return Ok(Action::Stay);
    }
    direction(dx, dy)
        .map(Action::from_direction)
        .ok_or_else(|| format!("unknown move {v}"))
}

fn object(name: &str) -> Result<Object, String> {
    match name {
        "onion" => Ok(Object::Onion),
        "dish" => Ok(Object::Dish),
        "soup" => Ok(Object::Soup),
        other => Err(format!("unsupported object {other}")),
    }
}

fn pot_state(obj: &Value, capacity: u8, cook_time: u8) -> Result<PotState, String> {
    let (onions, elapsed) = if let Some(ing) = obj.get("_ingredients").and_then(Value::as_array) {
        let tick = obj.get("cooking_tick").and_then(Value::as_i64).unwrap_or(-1);
        (ing.len() as i64, (tick >= 0).then_some(tick))
    } else if let Some(st) = obj.get("state").and_then(Value::as_array) {
        let n = st.get(1).and_then(Value::as_i64).ok_or("soup state without onion count")?;
        let t = st.get(2).and_then(Value::as_i64).unwrap_or(0);
        (n, Some(t))
    } else {
        return Err("soup without ingredients".into());
    };
    let onions = u8::try_from(onions).map_err(|_| "bad onion count".to_string())?;
    if onions > capacity {
        return Err(format!("{onions} onions in a pot"));
    }
    let cook_remaining = (onions == capacity).then(|| {
        let e = elapsed.unwrap_or(0).clamp(0, cook_time as i64) as u8;
        cook_time - e
    });
    Ok(PotState { onions, cook_remaining })
}

fn convert_state(raw: &Value, layout: &crate::kitchen::Layout, tick: u32, score: u32) -> Result<GameState, String> {
    let raw = parse_embedded(raw)?;
    let players = raw.get("players").and_then(Value::as_array).ok_or("state without players")?;
    if players.len() != 2 {
        return Err(format!("{} players", players.len()));
    }
    let mut ps = Vec::with_capacity(2);
    for p in players {
        let position = pos(p.get("position").ok_or("player without position")?)?;
        let (dx, dy) = xy(p.get("orientation").ok_or("player without orientation")?)?;
        let orientation = direction(dx, dy).ok_or("bad orientation")?;
        let held = match p.get("held_object") {
            None | Some(Value::Null) => None,
            Some(o) => Some(object(o.get("name").and_then(Value::as_str).ok_or("held object without name")?)?),
        };
        ps.push(PlayerState { position, orientation, held });
    }
    let mut state = GameState::initial(layout);
    state.players = [ps[0], ps[1]];
    state.tick = tick;
    state.score = score;
    let objects: Vec<Value> = match raw.get("objects") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(a)) => a.clone(),
        Some(Value::Object(m)) => m.values().cloned().collect(),
        Some(other) => return Err(format!("objects field {other}")),
    };
    let rules = layout.rules();
    for obj in &objects {
        let name = obj.get("name").and_then(Value::as_str).ok_or("object without name")?;
        let at = pos(obj.get("position").ok_or("object without position")?)?;
        if layout.pots().contains(&at) {
            if name != "soup" {
                return Err(format!("{name} inside a pot"));
            }
            let pot = pot_state(obj, rules.pot_capacity, rules.cook_time)?;
            if let Some(entry) = state.pots.iter_mut().find(|(p, _)| *p == at) {
                entry.1 = pot;
            }
        } else {
            let o = object(name)?;
            if state.counters.iter().any(|(p, _)| *p == at) {
                return Err(format!("two objects at {at}"));
            }
            state.counters.push((at, o));
        }
    }
    state.counters.sort_by_key(|(p, _)| *p);
    state.validate(layout).map_err(|e| e.to_string())?;
    Ok(state)
}

/// Convert raw rows into a dataset following the contract above.
pub fn import_human_dataset(raw: &Value) -> Result<(TrajectoryDataset, ImportSummary), TrainError> {
    let rows = raw
        .as_array()
        .ok_or_else(|| TrainError::InvalidConfig("raw data must be a JSON array of rows".into()))?;
    // (layout, trial) -> rows, in first-appearance order.
    let mut trials: Vec<((String, String), Vec<&Value>)> = Vec::new();
    let mut index: BTreeMap<(String, String), usize> = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        let layout = row
            .get("layout_name")
            .and_then(Value::as_str)
            .ok_or_else(|| TrainError::InvalidConfig(format!("row {i} has no layout_name")))?;
        let trial = match row.get("trial_id") {
            Some(Value::String(s)) => s.clone(),
            Some(v @ Value::Number(_)) => v.to_string(),
            _ => return Err(TrainError::InvalidConfig(format!("row {i} has no trial_id"))),
        };
        let key = (layout_alias(layout).to_string(), trial);
        let slot = *index.entry(key.clone()).or_insert_with(|| {
            trials.push((key, Vec::new()));
            trials.len() - 1
        });
        trials[slot].1.push(row);
    }
    let mut summary = ImportSummary {
        rows: rows.len(),
        ..Default::default()
    };
    let mut episodes = Vec::new();
    for ((layout_name, trial), mut rows) in trials {
        if rows.iter().all(|r| r.get("cur_gameloop").and_then(Value::as_i64).is_some()) {
            rows.sort_by_key(|r| r["cur_gameloop"].as_i64());
        }
        let converted = (|| -> Result<TrajectoryEpisode, String> {
            let layout = canonical_layout(&layout_name).map_err(|e| e.to_string())?;
            let mut states = Vec::with_capacity(rows.len());
            let mut joint_actions = Vec::with_capacity(rows.len());
            for (t, row) in rows.iter().enumerate() {
                let score = row.get("score").and_then(Value::as_u64).unwrap_or(0) as u32;
                states.push(convert_state(row.get("state").ok_or("row without state")?, &layout, t as u32, score)?);
                let ja = parse_embedded(row.get("joint_action").ok_or("row without joint_action")?)?;
                let ja = ja.as_array().filter(|a| a.len() == 2).ok_or("joint_action needs two entries")?;
                joint_actions.push([action(&ja[0])?, action(&ja[1])?]);
            }
            Ok(TrajectoryEpisode {
                layout: layout_name.clone(),
                states,
                joint_actions,
            })
        })();
        match converted {
            Ok(ep) => episodes.push(ep),
            Err(e) => summary.skipped.push(format!("{layout_name}/{trial}: {e}")),
        }
    }
    summary.episodes = episodes.len();
    if episodes.is_empty() {
        return Err(TrainError::EmptyAfterFilter(format!(
            "no importable trials ({} skipped)",
            summary.skipped.len()
        )));
    }
    let dataset = TrajectoryDataset {
        source: serde_json::json!({
            "importer": "human-gameplay-rows",
            "rows": summary.rows,
            "skipped": summary.skipped.len(),
        }),
        episodes,
    };
    Ok((dataset, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn row(trial: i64, t: i64, joint: Value) -> Value {
        // cramped_room: players start at (row 1, col 2) and (row 2, col 1).
        json!({
            "layout_name": "cramped_room",
            "trial_id": trial,
            "cur_gameloop": t,
            "state": json!({
                "players": [
                    {"position": [2, 1], "orientation": [0, -1], "held_object": null},
                    {"position": [1, 2], "orientation": [0, -1], "held_object": {"name": "onion", "position": [1, 2]}}
                ],
                "objects": []
            }).to_string(),
            "joint_action": joint,
        })
    }

    #[test]
    fn rows_group_into_ordered_episodes() {
        let raw = json!([
            row(1, 1, json!([[0, 0], "interact"])),
            row(1, 0, json!([[0, -1], [1, 0]])),
            row(2, 0, json!("[[0, 1], [0, 0]]")),
        ]);
        let (ds, summary) = import_human_dataset(&raw).unwrap();
        assert_eq!(summary.episodes, 2);
        assert_eq!(ds.episodes[0].joint_actions, vec![[Action::Up, Action::Right], [Action::Stay, Action::Interact]]);
        assert_eq!(ds.episodes[1].joint_actions, vec![[Action::Down, Action::Stay]]);
        assert_eq!(ds.episodes[0].states[0].players[1].held, Some(Object::Onion));
        ds.validate().unwrap();
    }

    #[test]
    fn unmappable_trials_are_skipped() {
        let mut bad = row(3, 0, json!([[0, 0], [0, 0]]));
        bad["layout_name"] = json!("unknown_kitchen");
        let raw = json!([row(1, 0, json!([[0, 0], [0, 0]])), bad]);
        let (_, summary) = import_human_dataset(&raw).unwrap();
        assert_eq!(summary.episodes, 1);
        assert_eq!(summary.skipped.len(), 1);
    }
}
