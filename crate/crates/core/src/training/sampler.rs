use std::collections::BTreeMap;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::subtasks::{SubTask, SubTaskMask};

/// How often each concrete sub-task has been assigned, per layout.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubTaskUsageCounter {
    pub per_layout: BTreeMap<String, [u64; SubTask::COUNT]>,
}

impl SubTaskUsageCounter {
    pub fn counts(&self, layout: &str) -> [u64; SubTask::COUNT] {
        self.per_layout.get(layout).copied().unwrap_or([0; SubTask::COUNT])
    }

    pub fn count(&self, layout: &str, task: SubTask) -> u64 {
        self.counts(layout)[task.index()]
    }

    /// Record one assignment. `Unknown` is never counted.
    pub fn increment(&mut self, layout: &str, task: SubTask) {
        if task.is_concrete() {
            self.per_layout.entry(layout.to_string()).or_insert([0; SubTask::COUNT])[task.index()] += 1;
        }
    }
}

/// Draw a concrete sub-task from `mask` with probability proportional to
/// `1 / (1 + count)`.
pub fn sample_subtask(
    counts: &[u64; SubTask::COUNT],
    mask: SubTaskMask,
    rng: &mut dyn RngCore,
) -> Result<SubTask, TrainError> {
    let options: Vec<(SubTask, f64)> = mask
        .concrete()
        .map(|t| (t, 1.0 / (1.0 + counts[t.index()] as f64)))
        .collect();
    let total: f64 = options.iter().map(|(_, w)| w).sum();
    if options.is_empty() {
        return Err(TrainError::NoFeasibleSubTask);
    }
    let mut u = rng.random::<f64>() * total;
    for &(t, w) in &options {
        if u < w {
            return Ok(t);
        }
        u -= w;
    }
    Ok(options.last().expect("non-empty").0)
}
