//! Pairing harness, unseen-teammate report and significance tests.

mod report;
mod stats;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Agent, AgentError, AgentMemory};
use crate::kitchen::{step, Action, GameState, KitchenError, Layout, ReplayLog};
use crate::subtasks::SubTask;

pub use report::{unseen_agent_suite, EvalReport, ReportCell, ReportRow, SuiteConfig, Teammate};
pub use stats::{likert_normalize, one_sample_t_test, preference_table, preference_test, welch_t_test, StatsError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Kitchen(#[from] KitchenError),
    #[error("no teammate {teammate} for layout {layout}")]
    MissingTeammate { teammate: String, layout: String },
    #[error("{0}")]
    Invalid(String),
}

/// Which seat agent A takes in each trial.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeatPolicy {
    /// A is the first player in even trials and the second in odd ones.
    #[default]
    Alternate,
    /// A always plays this seat.
    Fixed(usize),
}

impl SeatPolicy {
    pub fn seat_of_a(self, trial: usize) -> usize {
        match self {
            SeatPolicy::Alternate => trial % 2,
            SeatPolicy::Fixed(s) => s,
        }
    }
}

pub struct PairingSpec<'a> {
    pub a: &'a dyn Agent,
    pub b: &'a dyn Agent,
    pub layout: &'a Layout,
    pub trials: usize,
    pub horizon: u32,
    pub seats: SeatPolicy,
}

impl<'a> PairingSpec<'a> {
    pub fn new(a: &'a dyn Agent, b: &'a dyn Agent, layout: &'a Layout) -> Self {
        PairingSpec {
            a,
            b,
            layout,
            trials: 10,
            horizon: layout.rules().horizon,
            seats: SeatPolicy::Alternate,
        }
    }
}

/// A finished episode.
#[derive(Clone, Debug)]
pub struct EpisodeRecord {
    pub final_state: GameState,
    pub log: ReplayLog,
    pub sub_tasks: Vec<[Option<SubTask>; 2]>,
    /// Sum of per-tick rewards; always equals the final score.
    pub reward_sum: i64,
}

impl EpisodeRecord {
    pub fn score(&self) -> u32 {
        self.final_state.score
    }
}

/// Play one episode with `agents[i]` in seat `i`.
pub fn play_episode(
    agents: [&dyn Agent; 2],
    layout: &Layout,
    horizon: u32,
    seed: u64,
    rng: &mut dyn RngCore,
) -> Result<EpisodeRecord, EvalError> {
    for a in agents {
        a.check_layout(layout)?;
    }
    let mut state = GameState::initial(layout);
    let mut log = ReplayLog::new(layout, seed);
    log.header.horizon = horizon;
    let mut memories = [AgentMemory::default(), AgentMemory::default()];
    let mut sub_tasks = Vec::with_capacity(horizon as usize);
    let mut reward_sum = 0i64;
    for _ in 0..horizon {
        let mut joint = [Action::Stay; 2];
        let mut tasks = [None; 2];
        for seat in 0..2 {
            let d = agents[seat].act(&mut memories[seat], &state, layout, seat, rng)?;
            joint[seat] = d.action;
            tasks[seat] = d.sub_task;
        }
        let out = step(&state, joint, layout)?;
        reward_sum += out.reward as i64;
        state = out.next;
        log.actions.push(joint);
        sub_tasks.push(tasks);
    }
    Ok(EpisodeRecord {
        final_state: state,
        log,
        sub_tasks,
        reward_sum,
    })
}

/// Run every trial of `spec`; trial `i` uses seed `seed + i`.
pub fn run_pairing_episodes(spec: &PairingSpec<'_>, seed: u64) -> Result<Vec<EpisodeRecord>, EvalError> {
    use rand::SeedableRng;
    (0..spec.trials)
        .map(|trial| {
            let a_seat = spec.seats.seat_of_a(trial);
            let mut agents: [&dyn Agent; 2] = [spec.b, spec.b];
            agents[a_seat] = spec.a;
            let trial_seed = seed.wrapping_add(trial as u64);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(trial_seed);
            play_episode(agents, spec.layout, spec.horizon, trial_seed, &mut rng)
        })
        .collect()
}

/// Scores of every trial of `spec`.
pub fn run_pairing(spec: &PairingSpec<'_>, rng: &mut dyn RngCore) -> Result<Vec<u32>, EvalError> {
    let seed = rng.next_u64();
    Ok(run_pairing_episodes(spec, seed)?.iter().map(EpisodeRecord::score).collect())
}

/// Mean score of an agent paired with itself.
pub fn self_play_score(agent: &dyn Agent, layout: &Layout, trials: usize, seed: u64) -> Result<f64, EvalError> {
    let mut spec = PairingSpec::new(agent, agent, layout);
    spec.trials = trials;
    let scores: Vec<u32> = run_pairing_episodes(&spec, seed)?.iter().map(EpisodeRecord::score).collect();
    Ok(scores.iter().map(|&s| s as f64).sum::<f64>() / scores.len().max(1) as f64)
}
