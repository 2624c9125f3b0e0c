//! Full-horizon kitchen episodes where one or both seats belong to the
//! learner: flat policies choose primitive actions, managers choose
//! sub-tasks that a frozen worker executes.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ppo::{LearnerEnv, Observation, SeatStep};
use super::TrainError;
use crate::agents::{Agent, AgentMemory, PolicyHandle};
use crate::kitchen::{step, Action, GameState, InteractKind, Layout, StepOutcome};
use crate::observations::EncoderConfig;
use crate::subtasks::{feasible_mask_with, goal_layer_with, FeasibilityConfig, SubTask};

/// Dense rewards for flat learners, annealed to zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapingConfig {
    pub onion_in_pot: f32,
    pub dish_pickup: f32,
    pub soup_pickup: f32,
    /// Fraction of training after which shaping is gone.
    pub anneal_fraction: f64,
}

impl Default for ShapingConfig {
    fn default() -> Self {
        ShapingConfig {
            onion_in_pot: 3.0,
            dish_pickup: 3.0,
            soup_pickup: 5.0,
            anneal_fraction: 0.5,
        }
    }
}

impl ShapingConfig {
    pub fn none() -> Self {
        ShapingConfig {
            onion_in_pot: 0.0,
            dish_pickup: 0.0,
            soup_pickup: 0.0,
            anneal_fraction: 0.0,
        }
    }

    fn reward(&self, outcome: &StepOutcome, seat: usize) -> f32 {
        match outcome.events[seat].map(|e| e.kind) {
            Some(InteractKind::PlacedOnionInPot) => self.onion_in_pot,
            Some(InteractKind::PickedDishFromDispenser) => self.dish_pickup,
            Some(InteractKind::LoadedSoupFromPot) => self.soup_pickup,
            _ => 0.0,
        }
    }
}

/// How learner seats turn policy outputs into primitive actions.
#[derive(Clone)]
pub enum Learner {
    Flat {
        encoder: EncoderConfig,
        shaping: ShapingConfig,
    },
    Manager {
        encoder: EncoderConfig,
        worker: Arc<PolicyHandle>,
        feasibility: FeasibilityConfig,
    },
}

/// Who fills the non-learner seat.
#[derive(Clone)]
pub enum Partner {
    /// Both seats are learner seats.
    SelfPlay,
    /// One partner drawn uniformly per episode; the learner's seat is random.
    Pool(Vec<Arc<dyn Agent>>),
}

pub struct TeamEnv {
    layout: Layout,
    learner: Learner,
    partner: Partner,
    rng: ChaCha8Rng,
    state: GameState,
    learner_seats: Vec<usize>,
    memories: [AgentMemory; 2],
    partner_index: usize,
    masks: Vec<Option<[bool; SubTask::COUNT]>>,
    shaping_scale: f32,
    /// Episodes played with each pool partner.
    pub partner_usage: Vec<u64>,
    /// Masked sub-tasks submitted by the learner (must stay zero).
    pub masked_choices: u64,
    pub episodes: u64,
}

impl TeamEnv {
    pub fn new(layout: Layout, learner: Learner, partner: Partner, seed: u64) -> Result<TeamEnv, TrainError> {
        match &learner {
            Learner::Flat { encoder, .. } => encoder.check_layout(&layout)?,
            Learner::Manager { encoder, worker, .. } => {
                encoder.check_layout(&layout)?;
                worker.check_layout(&layout)?;
            }
        }
        let pool = match &partner {
            Partner::Pool(p) if p.is_empty() => {
                return Err(TrainError::InvalidConfig("empty partner pool".into()))
            }
            Partner::Pool(p) => p.len(),
            Partner::SelfPlay => 0,
        };
        let state = GameState::initial(&layout);
        let mut env = TeamEnv {
            layout,
            learner,
            partner,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state,
            learner_seats: Vec::new(),
            memories: Default::default(),
            partner_index: 0,
            masks: Vec::new(),
            shaping_scale: 1.0,
            partner_usage: vec![0; pool],
            masked_choices: 0,
            episodes: 0,
        };
        env.reset();
        Ok(env)
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn learner_seats(&self) -> &[usize] {
        &self.learner_seats
    }

    fn reset(&mut self) {
        self.state = GameState::initial(&self.layout);
        self.memories = Default::default();
        self.learner_seats = match &self.partner {
            Partner::SelfPlay => vec![0, 1],
            Partner::Pool(pool) => {
                self.partner_index = self.rng.random_range(0..pool.len());
                self.partner_usage[self.partner_index] += 1;
                vec![self.rng.random_range(0..2)]
            }
        };
        self.masks = vec![None; self.learner_seats.len()];
    }

    fn encode_seat(&mut self, seat: usize) -> Result<Observation, TrainError> {
        let (encoder, feasibility) = match &self.learner {
            Learner::Flat { encoder, .. } => (encoder, None),
            Learner::Manager { encoder, feasibility, .. } => (encoder, Some(feasibility)),
        };
        let frame = encoder.encode(&self.state, &self.layout, seat, None)?;
        let input = self.memories[seat].frames.push(frame, encoder.frame_stack);
        let mask = feasibility.map(|f| feasible_mask_with(&self.state, seat, &self.layout, f).to_bools());
        Ok(Observation {
            input,
            mask: mask.map(|m| m.to_vec()),
        })
    }

    /// Turn a learner output into a primitive action for `seat`.
    fn primitive(&mut self, seat: usize, slot: usize, output: usize) -> Result<Action, TrainError> {
        match &self.learner {
            Learner::Flat { .. } => {
                Action::from_index(output).ok_or_else(|| TrainError::InvalidConfig(format!("action index {output}")))
            }
            Learner::Manager { worker, feasibility, .. } => {
                let task = SubTask::from_index(output)
                    .ok_or_else(|| TrainError::InvalidConfig(format!("sub-task index {output}")))?;
                let mask = match self.masks[slot] {
                    Some(m) => m,
                    None => feasible_mask_with(&self.state, seat, &self.layout, feasibility).to_bools(),
                };
                if !mask[task.index()] {
                    self.masked_choices += 1;
                    return Err(TrainError::MaskedActionChosen(task));
                }
                let goal = goal_layer_with(&self.state, seat, task, &self.layout, feasibility);
                let input = worker.observe(&mut self.memories[seat].worker_frames, &self.state, &self.layout, seat, Some(&goal))?;
                let logits = worker.logits(&input);
                let a = worker.choose(&logits, None, &mut self.rng);
                Ok(Action::from_index(a).expect("6-way worker head"))
            }
        }
    }

    /// Advance one tick. `outputs` holds one learner output per learner seat.
    pub fn step_outputs(&mut self, outputs: &[usize]) -> Result<(StepOutcome, Vec<SeatStep>), TrainError> {
        let mut joint = [Action::Stay; 2];
        for (slot, &seat) in self.learner_seats.clone().iter().enumerate() {
            joint[seat] = self.primitive(seat, slot, outputs[slot])?;
        }
        if let Partner::Pool(pool) = &self.partner {
            let seat = 1 - self.learner_seats[0];
            let agent = Arc::clone(&pool[self.partner_index]);
            joint[seat] = agent.act(&mut self.memories[seat], &self.state, &self.layout, seat, &mut self.rng)?.action;
        }
        let outcome = step(&self.state, joint, &self.layout)?;
        self.state = outcome.next.clone();
        let done = self.state.tick >= self.layout.rules().horizon;
        let score = self.state.score as f64;
        let steps = self
            .learner_seats
            .iter()
            .map(|&seat| {
                let shaped = match &self.learner {
                    Learner::Flat { shaping, .. } => self.shaping_scale * shaping.reward(&outcome, seat),
                    Learner::Manager { .. } => 0.0,
                };
                SeatStep {
                    reward: outcome.reward as f32 + shaped,
                    done,
                    episode_return: done.then_some(score),
                }
            })
            .collect();
        if done {
            self.episodes += 1;
            self.reset();
        }
        for m in &mut self.masks {
            *m = None;
        }
        Ok((outcome, steps))
    }
}

impl LearnerEnv for TeamEnv {
    fn seats(&self) -> usize {
        self.learner_seats.len()
    }

    fn observe(&mut self) -> Result<Vec<Observation>, TrainError> {
        let seats = self.learner_seats.clone();
        let mut out = Vec::with_capacity(seats.len());
        for (slot, seat) in seats.into_iter().enumerate() {
            let obs = self.encode_seat(seat)?;
            self.masks[slot] = obs.mask.as_ref().map(|m| {
                let mut a = [false; SubTask::COUNT];
                a.copy_from_slice(m);
                a
            });
            out.push(obs);
        }
        Ok(out)
    }

    fn step(&mut self, actions: &[usize]) -> Result<Vec<SeatStep>, TrainError> {
        Ok(self.step_outputs(actions)?.1)
    }

    fn set_progress(&mut self, fraction: f64) {
        if let Learner::Flat { shaping, .. } = &self.learner {
            self.shaping_scale = if shaping.anneal_fraction <= 0.0 {
                0.0
            } else {
                (1.0 - fraction / shaping.anneal_fraction).max(0.0) as f32
            };
        }
    }
}
