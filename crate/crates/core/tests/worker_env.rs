mod common;

use std::sync::{Arc, Mutex};

use ha2_core::agents::{Agent, AgentError, AgentMemory, Decision, RandomAgent};
use ha2_core::kitchen::{canonical_layout, Action, Direction, GameState, Layout, Object, Pos, PotState};
use ha2_core::observations::EncoderConfig;
use ha2_core::subtasks::SubTask;
use ha2_core::training::{SubTaskUsageCounter, WorkerEnd, WorkerEnv, WorkerEnvConfig};
use proptest::prelude::*;
use rand::{Rng, RngCore, SeedableRng};

struct Still;

impl Agent for Still {
    fn name(&self) -> &str {
        "still"
    }

    fn act(&self, _: &mut AgentMemory, _: &GameState, _: &Layout, _: usize, _: &mut dyn RngCore) -> Result<Decision, AgentError> {
        Ok(Action::Stay.into())
    }
}

fn scenario(layout: &Layout, state: GameState, ego: usize, task: SubTask) -> WorkerEnv {
    WorkerEnv::from_scenario(
        layout.clone(),
        WorkerEnvConfig::default(),
        EncoderConfig::egocentric().with_goal_layer(),
        Arc::new(Still),
        state,
        ego,
        task,
    )
}

fn holding(layout: &Layout, pos: Pos, facing: Direction, held: Object) -> GameState {
    let mut s = GameState::initial(layout);
    s.players[0].position = pos;
    s.players[0].orientation = facing;
    s.players[0].held = Some(held);
    s
}

#[test]
fn completing_the_assigned_task_pays_one() {
    let layout = canonical_layout("cramped_room").unwrap();
    let s = holding(&layout, Pos::new(1, 2), Direction::Up, Object::Onion);
    let mut env = scenario(&layout, s, 0, SubTask::PlaceOnionInPot);
    let t = env.step_action(Action::Interact).unwrap();
    // one pot only, so no pot bonus applies
    assert_eq!((t.reward, t.done, t.end), (1.0, true, Some(WorkerEnd::Completed)));
}

#[test]
fn a_different_interact_costs_one() {
    let layout = canonical_layout("cramped_room").unwrap();
    let s = holding(&layout, Pos::new(1, 1), Direction::Up, Object::Onion);
    let mut env = scenario(&layout, s, 0, SubTask::PlaceOnionInPot);
    let t = env.step_action(Action::Interact).unwrap();
    assert_eq!((t.reward, t.end), (-1.0, Some(WorkerEnd::WrongInteract)));
}

#[test]
fn no_effect_interacts_and_timeouts() {
    let layout = canonical_layout("cramped_room").unwrap();
    // facing an empty floor cell: Interact does nothing
    let s = holding(&layout, Pos::new(1, 2), Direction::Down, Object::Onion);
    let mut env = scenario(&layout, s, 0, SubTask::PlaceOnionInPot);
    let timeout = WorkerEnvConfig::default().timeout;
    for _ in 1..timeout {
        let t = env.step_action(Action::Interact).unwrap();
        assert_eq!((t.reward, t.done), (0.0, false));
    }
    let t = env.step_action(Action::Stay).unwrap();
    assert_eq!((t.reward, t.done, t.end), (-1.0, true, Some(WorkerEnd::Timeout)));
}

fn two_pots() -> Layout {
    Layout::parse("two_pots", "XPXPX\nO1  D\nX  2X\nXXSXX").unwrap()
}

#[test]
fn fuller_pot_earns_the_bonus() {
    let layout = two_pots();
    let cfg = WorkerEnvConfig::default();
    let mut s = holding(&layout, Pos::new(1, 1), Direction::Up, Object::Onion);
    s.pots[0].1 = PotState { onions: 2, cook_remaining: None };
    let mut env = scenario(&layout, s.clone(), 0, SubTask::PlaceOnionInPot);
    assert_eq!(env.step_action(Action::Interact).unwrap().reward, 1.0 + cfg.pot_bonus);

    s.players[0].position = Pos::new(1, 3);
    let mut env = scenario(&layout, s, 0, SubTask::PlaceOnionInPot);
    assert_eq!(env.step_action(Action::Interact).unwrap().reward, 1.0);
}

#[test]
fn middle_counter_saves_six_steps() {
    let layout = Layout::parse("hall", "XXXXXXXXXX\nO1       P\nXXXXXX2DSX\nXXXXXXXXXX").unwrap();
    let cfg = WorkerEnvConfig::default();
    let s = holding(&layout, Pos::new(1, 2), Direction::Up, Object::Onion);
    let mate = s.players[1].position;
    let natural = common::walk_steps(&layout, s.players[0].position, mate, layout.pots()[0]).unwrap();
    let counter = common::walk_steps(&layout, s.players[0].position, mate, Pos::new(0, 2)).unwrap();
    assert_eq!(natural - counter, 6);
    let mut env = scenario(&layout, s, 0, SubTask::PlaceOnionOnCounter);
    let t = env.step_action(Action::Interact).unwrap();
    assert_eq!(t.end, Some(WorkerEnd::Completed));
    assert_eq!(t.reward, 1.0 + cfg.beta * 6.0);
}

#[test]
fn counter_shaping_is_never_negative() {
    // the counter next to the pot is no shortcut
    let layout = Layout::parse("hall", "XXXXXXXXXX\nO1       P\nXXXXXX2DSX\nXXXXXXXXXX").unwrap();
    let s = holding(&layout, Pos::new(1, 8), Direction::Up, Object::Onion);
    let mut env = scenario(&layout, s, 0, SubTask::PlaceOnionOnCounter);
    assert_eq!(env.step_action(Action::Interact).unwrap().reward, 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn episode_returns_stay_in_bounds(seed in any::<u64>(), li in 0..5usize) {
        let layout = canonical_layout(ha2_core::kitchen::CANONICAL_LAYOUT_NAMES[li]).unwrap();
        let cfg = WorkerEnvConfig::default();
        let upper = 1.0 + cfg.beta as f64 * layout.diameter() as f64 + cfg.pot_bonus as f64;
        let mut env = WorkerEnv::new(
            layout,
            cfg,
            EncoderConfig::egocentric().with_goal_layer(),
            vec![Arc::new(RandomAgent)],
            Arc::default(),
            seed,
        ).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..2000 {
            let t = env.step_action(Action::ALL[rng.random_range(0..6)]).unwrap();
            if let Some(r) = t.episode_return {
                prop_assert!((-1.0..=upper + 1e-6).contains(&r), "return {}", r);
            }
        }
    }
}

#[test]
fn usage_counts_stay_balanced_across_always_feasible_tasks() {
    let layout = canonical_layout("cramped_room").unwrap();
    let counter = Arc::new(Mutex::new(SubTaskUsageCounter::default()));
    let mut env = WorkerEnv::new(
        layout.clone(),
        WorkerEnvConfig::default(),
        EncoderConfig::egocentric().with_goal_layer(),
        vec![Arc::new(RandomAgent)],
        Arc::clone(&counter),
        3,
    )
    .unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50_000 {
        env.step_action(Action::ALL[rng.random_range(0..6)]).unwrap();
    }
    let c = counter.lock().unwrap();
    let a = c.count(layout.name(), SubTask::PickupOnionFromDispenser) as f64;
    let b = c.count(layout.name(), SubTask::PickupDishFromDispenser) as f64;
    assert!(a > 100.0 && b > 100.0);
    assert!(a.max(b) / a.min(b) <= 2.0, "{a} vs {b}");
    assert_eq!(c.count(layout.name(), SubTask::Unknown), 0);
}
