//! Self-play partner populations: eight base agents, each saved at its
//! initialization, a per-layout midpoint and the end of training.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_checkpoint, AgentError, PolicyHandle};

pub const POPULATION_FILE: &str = "population.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointStage {
    Init,
    Mid,
    Final,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationTags {
    pub seed: u64,
    pub hidden_dim: usize,
    pub frame_stack: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationEntry {
    pub base: String,
    pub tags: PopulationTags,
    pub stage: CheckpointStage,
    /// Checkpoint path relative to the manifest. For `mid` this is the
    /// fallback used on layouts missing from the mid table.
    pub path: String,
}

/// `population.json`: 24 entries plus, per layout, the mid checkpoint each
/// base agent should use there.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Population {
    pub entries: Vec<PopulationEntry>,
    pub mid_table: BTreeMap<String, BTreeMap<String, String>>,
    #[serde(skip)]
    pub root: PathBuf,
}

impl Population {
    pub fn load(path: &Path) -> Result<Population, AgentError> {
        let manifest = if path.is_dir() { path.join(POPULATION_FILE) } else { path.to_path_buf() };
        let text = std::fs::read_to_string(&manifest).map_err(|source| AgentError::Io {
            path: manifest.display().to_string(),
            source,
        })?;
        let mut pop: Population = serde_json::from_str(&text)
            .map_err(|e| AgentError::Bundle(format!("{}: {e}", manifest.display())))?;
        pop.root = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
        pop.validate()?;
        Ok(pop)
    }

    pub fn save(&self, dir: &Path) -> Result<(), AgentError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(dir.join(POPULATION_FILE), text).map_err(|source| AgentError::Io {
            path: dir.display().to_string(),
            source,
        })
    }

    pub fn base_agents(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.entries.iter().map(|e| e.base.as_str()).collect();
        out.dedup();
        out
    }

    /// Every base agent contributes exactly one checkpoint per stage.
    pub fn validate(&self) -> Result<(), AgentError> {
        let mut seen: BTreeMap<&str, Vec<CheckpointStage>> = BTreeMap::new();
        for e in &self.entries {
            seen.entry(&e.base).or_default().push(e.stage);
        }
        for (base, stages) in &mut seen {
            stages.sort();
            if *stages != [CheckpointStage::Init, CheckpointStage::Mid, CheckpointStage::Final] {
                return Err(AgentError::Bundle(format!(
                    "base agent {base} has stages {stages:?}, expected init, mid, final"
                )));
            }
        }
        Ok(())
    }

    /// Checkpoint path of `entry` on `layout`.
    pub fn path_for(&self, entry: &PopulationEntry, layout: &str) -> PathBuf {
        let rel = match entry.stage {
            CheckpointStage::Mid => self
                .mid_table
                .get(layout)
                .and_then(|t| t.get(&entry.base))
                .unwrap_or(&entry.path),
            _ => &entry.path,
        };
        self.root.join(rel)
    }

    /// Load all members, resolving the mid checkpoints for `layout`.
    pub fn members_for(&self, layout: &str) -> Result<Vec<PolicyHandle>, AgentError> {
        self.entries
            .iter()
            .map(|e| {
                let mut p = load_checkpoint(&self.path_for(e, layout))?;
                p.id = format!("{}_{:?}", e.base, e.stage).to_lowercase();
                Ok(p)
            })
            .collect()
    }
}
