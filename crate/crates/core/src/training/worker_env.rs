//! Sub-task episodes for the worker: each episode assigns one feasible
//! sub-task and ends at the worker's first effective interact or a timeout.

use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ppo::{LearnerEnv, Observation, SeatStep};
use super::sampler::{sample_subtask, SubTaskUsageCounter};
use super::TrainError;
use crate::agents::{Agent, AgentMemory};
use crate::kitchen::{step, Action, GameState, Layout, StepOutcome, TileKind};
use crate::observations::{EncoderConfig, FrameHistory};
use crate::subtasks::{
    completion_check, feasible_mask_with, goal_layer_with, reach_distances, Completion, FeasibilityConfig, SubTask,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkerEnvConfig {
    /// Ticks before an episode without an effective interact fails.
    pub timeout: u32,
    /// Shaping per step saved by using a counter.
    pub beta: f32,
    /// Bonus for adding an onion to the fullest non-full pot.
    pub pot_bonus: f32,
    pub feasibility: FeasibilityConfig,
    /// Draw the worker's seat at random for every base episode.
    pub randomize_seat: bool,
}

impl Default for WorkerEnvConfig {
    fn default() -> Self {
        WorkerEnvConfig {
            timeout: 30,
            beta: 0.05,
            pot_bonus: 0.2,
            feasibility: FeasibilityConfig::default(),
            randomize_seat: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerEpisodeSpec {
    pub assigned: SubTask,
    pub timeout: u32,
    pub start: GameState,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkerEnd {
    Completed,
    WrongInteract,
    Timeout,
    /// The base episode hit its horizon first; neither success nor failure.
    Truncated,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerStats {
    pub completed: u64,
    pub wrong_interact: u64,
    pub timeout: u64,
    pub truncated: u64,
}

impl WorkerStats {
    /// Completed share of episodes that ended by the worker's own doing.
    pub fn completion_rate(&self) -> f64 {
        let n = self.completed + self.wrong_interact + self.timeout;
        if n == 0 {
            0.0
        } else {
            self.completed as f64 / n as f64
        }
    }

    fn record(&mut self, end: WorkerEnd) {
        match end {
            WorkerEnd::Completed => self.completed += 1,
            WorkerEnd::WrongInteract => self.wrong_interact += 1,
            WorkerEnd::Timeout => self.timeout += 1,
            WorkerEnd::Truncated => self.truncated += 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkerTransition {
    pub reward: f32,
    pub done: bool,
    pub end: Option<WorkerEnd>,
    /// Total reward of the episode that just ended.
    pub episode_return: Option<f64>,
}

/// Where a counter sub-task would naturally have been done without the
/// counter: the tiles whose distance the counter shortcut is compared to.
pub fn natural_targets(task: SubTask, layout: &Layout) -> &[crate::kitchen::Pos] {
    match task {
        SubTask::PlaceOnionOnCounter | SubTask::PlaceDishOnCounter | SubTask::PickupSoupFromCounter => {
            layout.pots()
        }
        SubTask::PlaceSoupOnCounter => layout.cells(TileKind::ServingWindow),
        SubTask::PickupOnionFromCounter => layout.cells(TileKind::OnionDispenser),
        SubTask::PickupDishFromCounter => layout.cells(TileKind::DishDispenser),
        _ => &[],
    }
}

/// Reward for one worker tick, excluding the timeout penalty.
///
/// `start_dist` holds the worker's walking distances at the start of the
/// episode with the teammate as an obstacle.
pub fn worker_reward(
    cfg: &WorkerEnvConfig,
    layout: &Layout,
    before: &GameState,
    outcome: &StepOutcome,
    ego: usize,
    assigned: SubTask,
    start_dist: &[Option<u32>],
) -> (f32, Completion) {
    let completion = completion_check(outcome, ego, assigned);
    let reward = match completion {
        Completion::NoInteract => 0.0,
        Completion::WrongInteract => -1.0,
        Completion::Completed => {
            let event = outcome.events[ego].expect("completed tasks have an event");
            let mut r = 1.0;
            if assigned.is_counter_task() {
                let d = layout.diameter();
                let natural = layout.nearest_adjacent(start_dist, natural_targets(assigned, layout)).unwrap_or(d);
                let counter = layout.nearest_adjacent(start_dist, &[event.target]).unwrap_or(d);
                let saved = natural.saturating_sub(counter).min(d);
                r += cfg.beta * saved as f32;
            }
            if assigned == SubTask::PlaceOnionInPot {
                let cap = layout.rules().pot_capacity;
                let mine = before.pot(event.target).map(|p| p.onions).unwrap_or(0);
                let others: Vec<u8> = before
                    .pots
                    .iter()
                    .filter(|(p, pot)| *p != event.target && pot.accepts_onion(cap))
                    .map(|(_, pot)| pot.onions)
                    .collect();
                if !others.is_empty() && others.iter().all(|&o| mine > o) {
                    r += cfg.pot_bonus;
                }
            }
            r
        }
    };
    (reward, completion)
}

/// Worker training environment over one layout.
pub struct WorkerEnv {
    layout: Layout,
    cfg: WorkerEnvConfig,
    encoder: EncoderConfig,
    teammates: Vec<Arc<dyn Agent>>,
    counter: Arc<Mutex<SubTaskUsageCounter>>,
    rng: ChaCha8Rng,
    state: GameState,
    ego: usize,
    mate: usize,
    mate_memory: AgentMemory,
    frames: FrameHistory,
    assigned: SubTask,
    start: GameState,
    start_dist: Vec<Option<u32>>,
    elapsed: u32,
    ret: f64,
    pub stats: WorkerStats,
}

impl WorkerEnv {
    pub fn new(
        layout: Layout,
        cfg: WorkerEnvConfig,
        encoder: EncoderConfig,
        teammates: Vec<Arc<dyn Agent>>,
        counter: Arc<Mutex<SubTaskUsageCounter>>,
        seed: u64,
    ) -> Result<WorkerEnv, TrainError> {
        if teammates.is_empty() {
            return Err(TrainError::InvalidConfig("worker env needs a teammate".into()));
        }
        encoder.check_layout(&layout)?;
        let state = GameState::initial(&layout);
        let mut env = WorkerEnv {
            start: state.clone(),
            state,
            layout,
            cfg,
            encoder,
            teammates,
            counter,
            rng: ChaCha8Rng::seed_from_u64(seed),
            ego: 0,
            mate: 0,
            mate_memory: AgentMemory::default(),
            frames: FrameHistory::default(),
            assigned: SubTask::Unknown,
            start_dist: Vec::new(),
            elapsed: 0,
            ret: 0.0,
            stats: WorkerStats::default(),
        };
        env.reset_base();
        env.begin_episode()?;
        Ok(env)
    }

    /// An environment fixed to one episode, for scripted scenarios.
    pub fn from_scenario(
        layout: Layout,
        cfg: WorkerEnvConfig,
        encoder: EncoderConfig,
        teammate: Arc<dyn Agent>,
        state: GameState,
        ego: usize,
        assigned: SubTask,
    ) -> WorkerEnv {
        let start_dist = reach_distances(&state, ego, &layout);
        WorkerEnv {
            start: state.clone(),
            state,
            layout,
            cfg,
            encoder,
            teammates: vec![teammate],
            counter: Arc::default(),
            rng: ChaCha8Rng::seed_from_u64(0),
            ego,
            mate: 0,
            mate_memory: AgentMemory::default(),
            frames: FrameHistory::default(),
            assigned,
            start_dist,
            elapsed: 0,
            ret: 0.0,
            stats: WorkerStats::default(),
        }
    }

    pub fn assigned(&self) -> SubTask {
        self.assigned
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn ego(&self) -> usize {
        self.ego
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn episode_spec(&self) -> WorkerEpisodeSpec {
        WorkerEpisodeSpec {
            assigned: self.assigned,
            timeout: self.cfg.timeout,
            start: self.start.clone(),
        }
    }

    fn reset_base(&mut self) {
        self.state = GameState::initial(&self.layout);
        self.ego = if self.cfg.randomize_seat { self.rng.random_range(0..2) } else { 0 };
        self.mate = self.rng.random_range(0..self.teammates.len());
        self.mate_memory = AgentMemory::default();
    }

    fn begin_episode(&mut self) -> Result<(), TrainError> {
        let counts = self.counter.lock().expect("counter lock").counts(self.layout.name());
        let mask = feasible_mask_with(&self.state, self.ego, &self.layout, &self.cfg.feasibility);
        let task = match sample_subtask(&counts, mask, &mut self.rng) {
            Ok(t) => t,
            Err(TrainError::NoFeasibleSubTask) => {
                self.reset_base();
                let mut mask = feasible_mask_with(&self.state, self.ego, &self.layout, &self.cfg.feasibility);
                // split kitchens can leave one seat idle at the start state
                if !mask.has_concrete() {
                    self.ego = 1 - self.ego;
                    mask = feasible_mask_with(&self.state, self.ego, &self.layout, &self.cfg.feasibility);
                }
                sample_subtask(&counts, mask, &mut self.rng)?
            }
            Err(e) => return Err(e),
        };
        self.counter.lock().expect("counter lock").increment(self.layout.name(), task);
        self.assigned = task;
        self.start = self.state.clone();
        self.start_dist = reach_distances(&self.state, self.ego, &self.layout);
        self.elapsed = 0;
        self.ret = 0.0;
        self.frames.clear();
        Ok(())
    }

    /// Encoded observation: the worker's view with the goal layer of the
    /// assigned sub-task.
    pub fn observation(&mut self) -> Result<Vec<f32>, TrainError> {
        let goal = goal_layer_with(&self.state, self.ego, self.assigned, &self.layout, &self.cfg.feasibility);
        let frame = self.encoder.encode(&self.state, &self.layout, self.ego, Some(&goal))?;
        Ok(self.frames.push(frame, self.encoder.frame_stack))
    }

    pub fn step_action(&mut self, action: Action) -> Result<WorkerTransition, TrainError> {
        let mate_seat = 1 - self.ego;
        let mate_action = self.teammates[self.mate]
            .act(&mut self.mate_memory, &self.state, &self.layout, mate_seat, &mut self.rng)?
            .action;
        let mut joint = [Action::Stay; 2];
        joint[self.ego] = action;
        joint[mate_seat] = mate_action;
        let outcome = step(&self.state, joint, &self.layout)?;
        self.elapsed += 1;
        let (mut reward, completion) = worker_reward(
            &self.cfg,
            &self.layout,
            &self.state,
            &outcome,
            self.ego,
            self.assigned,
            &self.start_dist,
        );
        let mut end = match completion {
            Completion::Completed => Some(WorkerEnd::Completed),
            Completion::WrongInteract => Some(WorkerEnd::WrongInteract),
            Completion::NoInteract if self.elapsed >= self.cfg.timeout => {
                reward = -1.0;
                Some(WorkerEnd::Timeout)
            }
            Completion::NoInteract => None,
        };
        self.state = outcome.next;
        let horizon_hit = self.state.tick >= self.layout.rules().horizon;
        if horizon_hit && end.is_none() {
            end = Some(WorkerEnd::Truncated);
        }
        self.ret += reward as f64;
        let mut episode_return = None;
        if let Some(e) = end {
            self.stats.record(e);
            episode_return = Some(self.ret);
            if horizon_hit {
                self.reset_base();
            }
            self.begin_episode()?;
        }
        Ok(WorkerTransition {
            reward,
            done: end.is_some(),
            end,
            episode_return,
        })
    }
}

impl LearnerEnv for WorkerEnv {
    fn seats(&self) -> usize {
        1
    }

    fn observe(&mut self) -> Result<Vec<Observation>, TrainError> {
        Ok(vec![Observation {
            input: self.observation()?,
            mask: None,
        }])
    }

    fn step(&mut self, actions: &[usize]) -> Result<Vec<SeatStep>, TrainError> {
        let action = Action::from_index(actions[0]).ok_or_else(|| TrainError::InvalidConfig("bad action".into()))?;
        let t = self.step_action(action)?;
        Ok(vec![SeatStep {
            reward: t.reward,
            done: t.done,
            episode_return: t.episode_return,
        }])
    }
}
