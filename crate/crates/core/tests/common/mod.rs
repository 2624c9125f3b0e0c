//! Independent oracles and state generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::{HashMap, HashSet, VecDeque};

use ha2_core::agents::scripted_greedy;
use ha2_core::kitchen::{step, Action, Direction, GameState, InteractKind, Layout, Object, Pos, StepOutcome};
use ha2_core::subtasks::SubTask;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// States visited by pairs that mix scripted and uniformly random actions,
/// sampled every `stride` ticks. Episodes restart at the horizon.
pub fn reachable_states(layout: &Layout, n: usize, stride: usize, seed: u64) -> Vec<GameState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut state = GameState::initial(layout);
    // Per-episode chance that a seat follows the script on a given tick.
    let mut greed = [0.5f64; 2];
    let mut t = 0usize;
    while out.len() < n {
        if state.tick >= layout.rules().horizon {
            state = GameState::initial(layout);
            greed = [rng.random(), rng.random()];
        }
        let mut joint = [Action::Stay; 2];
        for (seat, a) in joint.iter_mut().enumerate() {
            *a = if rng.random_bool(greed[seat]) {
                scripted_greedy(&state, layout, seat)
            } else {
                Action::ALL[rng.random_range(0..Action::COUNT)]
            };
        }
        state = step(&state, joint, layout).expect("valid state").next;
        t += 1;
        if t.is_multiple_of(stride) {
            out.push(state.clone());
        }
    }
    out
}

fn interact_task(kind: InteractKind) -> SubTask {
    use InteractKind as K;
    match kind {
        K::PickedOnionFromDispenser => SubTask::PickupOnionFromDispenser,
        K::PickedOnionFromCounter => SubTask::PickupOnionFromCounter,
        K::PickedDishFromDispenser => SubTask::PickupDishFromDispenser,
        K::PickedDishFromCounter => SubTask::PickupDishFromCounter,
        K::PlacedOnionInPot => SubTask::PlaceOnionInPot,
        K::PlacedOnionOnCounter => SubTask::PlaceOnionOnCounter,
        K::LoadedSoupFromPot => SubTask::GetSoupFromPot,
        K::PlacedDishOnCounter => SubTask::PlaceDishOnCounter,
        K::PickedSoupFromCounter => SubTask::PickupSoupFromCounter,
        K::PlacedSoupOnCounter => SubTask::PlaceSoupOnCounter,
        K::ServedSoup => SubTask::ServeSoup,
    }
}

/// Brute-force feasibility: breadth-first search over `player`'s position
/// and orientation using the real transition function with the teammate
/// frozen (always Stay). Cooking pots are treated as ready, since the
/// player may wait. A concrete sub-task is feasible when pressing Interact
/// from some reachable pose produces an event of that sub-task.
pub fn bfs_mask_oracle(state: &GameState, player: usize, layout: &Layout) -> [bool; SubTask::COUNT] {
    let mut base = state.clone();
    for (_, pot) in base.pots.iter_mut() {
        if pot.cook_remaining.is_some() {
            pot.cook_remaining = Some(0);
        }
    }
    let pose = |s: &GameState| (s.players[player].position, s.players[player].orientation);
    let with_pose = |p: (ha2_core::kitchen::Pos, Direction)| {
        let mut s = base.clone();
        s.players[player].position = p.0;
        s.players[player].orientation = p.1;
        s
    };
    let joint = |a: Action| {
        let mut j = [Action::Stay; 2];
        j[player] = a;
        j
    };
    let mut mask = [false; SubTask::COUNT];
    mask[SubTask::Unknown.index()] = true;
    let mut seen = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(pose(&base));
    queue.push_back(pose(&base));
    while let Some(p) = queue.pop_front() {
        let s = with_pose(p);
        let out = step(&s, joint(Action::Interact), layout).expect("valid state");
        if let Some(e) = out.events[player] {
            mask[interact_task(e.kind).index()] = true;
        }
        for a in [Action::Up, Action::Down, Action::Left, Action::Right] {
            let next = pose(&step(&s, joint(a), layout).expect("valid state").next);
            if seen.insert(next) {
                queue.push_back(next);
            }
        }
    }
    mask
}

/// Onion mass (soups count three) and dish count, in hands, on counters and
/// in pots.
pub fn inventory(state: &GameState, capacity: u8) -> (i64, i64) {
    let mut onions = 0i64;
    let mut dishes = 0i64;
    let objects = state
        .players
        .iter()
        .filter_map(|p| p.held)
        .chain(state.counters.iter().map(|(_, o)| *o));
    for o in objects {
        match o {
            Object::Onion => onions += 1,
            Object::Dish => dishes += 1,
            Object::Soup => {
                onions += capacity as i64;
                dishes += 1;
            }
        }
    }
    onions += state.pots.iter().map(|(_, p)| p.onions as i64).sum::<i64>();
    (onions, dishes)
}

/// Check conservation and collision rules for one transition. Returns a
/// description of the first violation.
pub fn transition_violation(before: &GameState, out: &StepOutcome, layout: &Layout) -> Option<String> {
    let after = &out.next;
    let cap = layout.rules().pot_capacity;
    let (o0, d0) = inventory(before, cap);
    let (o1, d1) = inventory(after, cap);
    let count = |k: InteractKind| out.events.iter().flatten().filter(|e| e.kind == k).count() as i64;
    let served = count(InteractKind::ServedSoup);
    let expect_onions = o0 + count(InteractKind::PickedOnionFromDispenser) - cap as i64 * served;
    let expect_dishes = d0 + count(InteractKind::PickedDishFromDispenser) - served;
    if o1 != expect_onions || d1 != expect_dishes {
        return Some(format!("inventory ({o0},{d0}) -> ({o1},{d1}), expected ({expect_onions},{expect_dishes})"));
    }
    let [a, b] = [after.players[0].position, after.players[1].position];
    if a == b {
        return Some(format!("players share {a}"));
    }
    if !layout.is_walkable(a) || !layout.is_walkable(b) {
        return Some("player off the floor".into());
    }
    if a == before.players[1].position && b == before.players[0].position {
        return Some("players swapped".into());
    }
    for (before_p, after_p) in before.players.iter().zip(&after.players) {
        if before_p.position.manhattan(after_p.position) > 1 {
            return Some("player jumped".into());
        }
    }
    if after.score != before.score + out.reward as u32 || out.reward != 20 * served as i32 {
        return Some(format!("score {} -> {} with reward {}", before.score, after.score, out.reward));
    }
    None
}

/// Walking distance from `from` to a cell adjacent to `target`, by plain
/// breadth-first search with `blocked` as an obstacle.
pub fn walk_steps(layout: &Layout, from: Pos, blocked: Pos, target: Pos) -> Option<u32> {
    let mut dist = HashMap::from([(from, 0u32)]);
    let mut queue = VecDeque::from([from]);
    while let Some(p) = queue.pop_front() {
        if p.manhattan(target) == 1 {
            return Some(dist[&p]);
        }
        for d in Direction::ALL {
            let q = p.offset(d);
            if layout.is_walkable(q) && q != blocked && !dist.contains_key(&q) {
                dist.insert(q, dist[&p] + 1);
                queue.push_back(q);
            }
        }
    }
    None
}

/// Standard normal draw by Box-Muller.
pub fn normal(rng: &mut dyn RngCore) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn studentized_difference(xs: &[f64], ys: &[f64]) -> f64 {
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) / n)
    };
    let ((mx, ax), (my, ay)) = (stats(xs), stats(ys));
    (mx - my) / (ax + ay).sqrt()
}

/// Two-sided permutation p-value of the studentized mean difference.
pub fn permutation_p(xs: &[f64], ys: &[f64], rounds: usize, rng: &mut dyn RngCore) -> f64 {
    let observed = studentized_difference(xs, ys).abs();
    let mut pooled: Vec<f64> = xs.iter().chain(ys).copied().collect();
    let mut extreme = 0usize;
    for _ in 0..rounds {
        pooled.shuffle(rng);
        let (a, b) = pooled.split_at(xs.len());
        if studentized_difference(a, b).abs() >= observed - 1e-12 {
            extreme += 1;
        }
    }
    (extreme + 1) as f64 / (rounds + 1) as f64
}

/// Accept/reject agreement at 0.05 between Welch and the permutation oracle
/// on 100 random normal sample pairs.
pub fn welch_oracle_agreement(seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agree = 0;
    for _ in 0..100 {
        let (nx, ny) = (rng.random_range(8..20), rng.random_range(8..20));
        let shift = rng.random_range(0.0..1.5);
        let sy = rng.random_range(0.5..2.0);
        let xs: Vec<f64> = (0..nx).map(|_| normal(&mut rng)).collect();
        let ys: Vec<f64> = (0..ny).map(|_| shift + sy * normal(&mut rng)).collect();
        let p = ha2_core::evaluation::welch_t_test(&xs, &ys).expect("enough samples").1;
        let oracle = permutation_p(&xs, &ys, 4000, &mut rng);
        if (p < 0.05) == (oracle < 0.05) {
            agree += 1;
        }
    }
    agree
}
