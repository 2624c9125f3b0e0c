use std::collections::VecDeque;

use rand::RngCore;

use super::{Agent, AgentError, AgentMemory, Decision};
use crate::kitchen::{Action, Direction, GameState, Layout, Object, Pos};
use crate::subtasks::{feasible_targets, reach_distances, FeasibilityConfig, SubTask};

/// Priority order of the scripted policy.
const PRIORITY: [SubTask; 5] = [
    SubTask::ServeSoup,
    SubTask::GetSoupFromPot,
    SubTask::PlaceOnionInPot,
    SubTask::PickupDishFromDispenser,
    SubTask::PickupOnionFromDispenser,
];

/// Deterministic rule policy: work on the highest-priority feasible sub-task,
/// walking the shortest path to its nearest target and interacting once
/// facing it. A dish is only fetched while some pot is cooking or ready and
/// the teammate is not already carrying one.
pub fn scripted_greedy(state: &GameState, layout: &Layout, ego: usize) -> Action {
    let cfg = FeasibilityConfig::default();
    let dist = reach_distances(state, ego, layout);
    let mate = &state.players[1 - ego];
    for task in PRIORITY {
        if task == SubTask::PickupDishFromDispenser {
            let soup_coming = state.pots.iter().any(|(_, p)| p.is_cooking() || p.is_ready());
            let mate_has_dish = matches!(mate.held, Some(Object::Dish) | Some(Object::Soup));
            if !soup_coming || mate_has_dish {
                continue;
            }
        }
        let targets = feasible_targets(state, ego, layout, task, &cfg, Some(&dist));
        if let Some(action) = navigate_to(state, layout, ego, &targets) {
            return action;
        }
    }
    Action::Stay
}

/// Next action that brings `ego` to face one of `targets` (or interacts if it
/// already does). `None` when no target can be reached.
pub fn navigate_to(state: &GameState, layout: &Layout, ego: usize, targets: &[Pos]) -> Option<Action> {
    if targets.is_empty() {
        return None;
    }
    let me = &state.players[ego];
    if targets.contains(&me.facing()) {
        return Some(Action::Interact);
    }
    for d in Direction::ALL {
        if targets.contains(&me.position.offset(d)) {
            // target tiles are never walkable, so this only turns
            return Some(Action::from_direction(d));
        }
    }
    let mate = state.players[1 - ego].position;
    let field = distance_field(layout, targets, Some(mate));
    let step = best_step(layout, &field, me.position);
    step.or_else(|| {
        // the teammate blocks every route: head towards it anyway
        let open = distance_field(layout, targets, None);
        best_step(layout, &open, me.position)
    })
}

/// Multi-source BFS distances from the floor cells adjacent to `targets`.
fn distance_field(layout: &Layout, targets: &[Pos], blocked: Option<Pos>) -> Vec<Option<u32>> {
    let mut dist = vec![None; layout.width() * layout.height()];
    let mut queue = VecDeque::new();
    for &t in targets {
        for d in Direction::ALL {
            let n = t.offset(d);
            if layout.is_walkable(n) && Some(n) != blocked && dist[layout.index(n)].is_none() {
                dist[layout.index(n)] = Some(0);
                queue.push_back(n);
            }
        }
    }
    while let Some(p) = queue.pop_front() {
        let dp = dist[layout.index(p)].expect("queued cells have distances");
        for d in Direction::ALL {
            let q = p.offset(d);
            if layout.is_walkable(q) && Some(q) != blocked && dist[layout.index(q)].is_none() {
                dist[layout.index(q)] = Some(dp + 1);
                queue.push_back(q);
            }
        }
    }
    dist
}

fn best_step(layout: &Layout, field: &[Option<u32>], from: Pos) -> Option<Action> {
    let mut best: Option<(u32, Direction)> = None;
    for d in Direction::ALL {
        let n = from.offset(d);
        if !layout.is_walkable(n) {
            continue;
        }
        if let Some(v) = field[layout.index(n)] {
            if best.is_none_or(|(b, _)| v < b) {
                best = Some((v, d));
            }
        }
    }
    best.map(|(_, d)| Action::from_direction(d))
}

/// [`scripted_greedy`] as a seat-filling agent.
#[derive(Clone, Debug, Default)]
pub struct ScriptedAgent;

impl Agent for ScriptedAgent {
    fn name(&self) -> &str {
        "scripted"
    }

    fn act(
        &self,
        _: &mut AgentMemory,
        state: &GameState,
        layout: &Layout,
        ego: usize,
        _: &mut dyn RngCore,
    ) -> Result<Decision, AgentError> {
        Ok(scripted_greedy(state, layout, ego).into())
    }
}
