use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dynamics::step_unchecked;
use super::{Action, GameState, KitchenError, Layout};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayHeader {
    pub layout: String,
    pub seed: u64,
    pub horizon: u32,
}

/// A header line followed by one joint action per line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplayLog {
    pub header: ReplayHeader,
    pub actions: Vec<[Action; 2]>,
}

impl ReplayLog {
    pub fn new(layout: &Layout, seed: u64) -> ReplayLog {
        ReplayLog {
            header: ReplayHeader {
                layout: layout.name().to_owned(),
                seed,
                horizon: layout.rules().horizon,
            },
            actions: Vec::new(),
        }
    }

    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        serde_json::to_writer(&mut out, &self.header)?;
        out.write_all(b"\n")?;
        for joint in &self.actions {
            serde_json::to_writer(&mut out, joint)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_from(input: impl BufRead) -> Result<ReplayLog, KitchenError> {
        let bad = |line: usize, e: &dyn std::fmt::Display| KitchenError::BadLog(format!("line {}: {e}", line + 1));
        let mut lines = input.lines().enumerate().filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));
        let (_, first) = lines.next().ok_or_else(|| KitchenError::BadLog("empty log".into()))?;
        let first = first.map_err(|e| bad(0, &e))?;
        let header: ReplayHeader = serde_json::from_str(&first).map_err(|e| bad(0, &e))?;
        let mut actions = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|e| bad(i, &e))?;
            actions.push(serde_json::from_str(&line).map_err(|e| bad(i, &e))?);
        }
        Ok(ReplayLog { header, actions })
    }

    pub fn load(path: &Path) -> Result<ReplayLog, KitchenError> {
        let file = std::fs::File::open(path).map_err(|e| KitchenError::BadLog(format!("{}: {e}", path.display())))?;
        ReplayLog::read_from(std::io::BufReader::new(file))
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()
    }

    /// Every intermediate state, starting with the initial one.
    pub fn states(&self, layout: &Layout) -> Result<Vec<GameState>, KitchenError> {
        self.check_len()?;
        let mut state = GameState::initial(layout);
        let mut out = Vec::with_capacity(self.actions.len() + 1);
        out.push(state.clone());
        for joint in &self.actions {
            state = step_unchecked(&state, *joint, layout).next;
            out.push(state.clone());
        }
        Ok(out)
    }

    fn check_len(&self) -> Result<(), KitchenError> {
        if self.actions.len() > self.header.horizon as usize {
            return Err(KitchenError::LogLengthExceedsHorizon {
                len: self.actions.len(),
                horizon: self.header.horizon,
            });
        }
        Ok(())
    }
}

/// Re-simulate a log from the layout's start state.
pub fn replay(layout: &Layout, log: &ReplayLog) -> Result<GameState, KitchenError> {
    log.check_len()?;
    let mut state = GameState::initial(layout);
    for joint in &log.actions {
        state = step_unchecked(&state, *joint, layout).next;
    }
    Ok(state)
}
