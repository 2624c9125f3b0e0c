mod common;

use ha2_core::kitchen::{
    canonical_layout, canonical_layouts, legal_interact_effect, perturbed_layout, render_text, replay, step,
    swap_tiles, Action, GameState, KitchenError, Pos, ReplayLog, CANONICAL_LAYOUT_NAMES,
};
use proptest::prelude::*;

fn action() -> impl Strategy<Value = Action> {
    (0..Action::COUNT).prop_map(|i| Action::ALL[i])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn invariants_hold_along_random_trajectories(
        li in 0..CANONICAL_LAYOUT_NAMES.len(),
        actions in prop::collection::vec((action(), action()), 1..400),
    ) {
        let layout = canonical_layout(CANONICAL_LAYOUT_NAMES[li]).unwrap();
        let mut state = GameState::initial(&layout);
        for (a, b) in actions {
            let out = step(&state, [a, b], &layout).unwrap();
            prop_assert_eq!(common::transition_violation(&state, &out, &layout), None);
            // pure: the same call again gives the same outcome
            prop_assert_eq!(&step(&state, [a, b], &layout).unwrap(), &out);
            // player 0's interact resolves first, so its prediction is exact
            let predicted = if a == Action::Interact { legal_interact_effect(&state, 0, &layout) } else { None };
            prop_assert_eq!(out.events[0], predicted);
            prop_assert!(out.next.score >= state.score && out.next.score.is_multiple_of(20));
            prop_assert_eq!(out.next.tick, state.tick + 1);
            state = out.next;
        }
    }

    #[test]
    fn second_interact_matches_prediction_after_the_first(
        li in 0..CANONICAL_LAYOUT_NAMES.len(),
        seed in any::<u64>(),
    ) {
        let layout = canonical_layout(CANONICAL_LAYOUT_NAMES[li]).unwrap();
        for s in common::reachable_states(&layout, 20, 5, seed) {
            // a timer reaching zero would change what player 1 may do
            if s.pots.iter().any(|(_, p)| p.cook_remaining == Some(1)) {
                continue;
            }
            let out = step(&s, [Action::Interact, Action::Interact], &layout).unwrap();
            let mid = step(&s, [Action::Interact, Action::Stay], &layout).unwrap().next;
            prop_assert_eq!(out.events[1], legal_interact_effect(&mid, 1, &layout));
        }
    }
}

#[test]
fn replay_reproduces_recorded_episodes() {
    use rand::{Rng, SeedableRng};
    for layout in canonical_layouts() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut log = ReplayLog::new(&layout, 11);
        let mut state = GameState::initial(&layout);
        for _ in 0..layout.rules().horizon {
            let joint = [Action::ALL[rng.random_range(0..6)], Action::ALL[rng.random_range(0..6)]];
            state = step(&state, joint, &layout).unwrap().next;
            log.actions.push(joint);
        }
        let text = log.to_jsonl();
        let back = ReplayLog::read_from(text.as_bytes()).unwrap();
        assert_eq!(back, log);
        assert_eq!(replay(&layout, &back).unwrap().state_hash(), state.state_hash());
    }
}

#[test]
fn replay_rejects_logs_longer_than_the_horizon() {
    let layout = canonical_layout("cramped_room").unwrap();
    let mut log = ReplayLog::new(&layout, 0);
    log.actions = vec![[Action::Stay; 2]; 401];
    assert!(matches!(replay(&layout, &log), Err(KitchenError::LogLengthExceedsHorizon { .. })));
}

#[test]
fn inconsistent_states_are_rejected() {
    let layout = canonical_layout("cramped_room").unwrap();
    let mut s = GameState::initial(&layout);
    s.players[1].position = s.players[0].position;
    assert!(matches!(step(&s, [Action::Stay; 2], &layout), Err(KitchenError::InconsistentState(_))));
}

#[test]
fn perturbed_layouts_keep_every_feature() {
    for name in CANONICAL_LAYOUT_NAMES {
        let base = canonical_layout(name).unwrap();
        let modified = perturbed_layout(name).unwrap();
        assert_eq!(modified.name(), format!("~{name}"));
        assert_ne!(modified.to_ascii(), base.to_ascii());
        assert_eq!(modified.pots().len(), base.pots().len());
        let sorted = |s: String| {
            let mut v: Vec<char> = s.chars().filter(|c| !c.is_whitespace()).collect();
            v.sort();
            v
        };
        assert_eq!(sorted(modified.to_ascii()), sorted(base.to_ascii()), "{name}");
    }
}

#[test]
fn swapping_a_tile_with_itself_is_invalid() {
    let layout = canonical_layout("cramped_room").unwrap();
    let p = Pos::new(0, 2);
    assert!(matches!(swap_tiles(&layout, p, p), Err(KitchenError::InvalidSwap(_))));
}

#[test]
fn text_render_has_one_row_per_grid_row() {
    let layout = canonical_layout("coordination_ring").unwrap();
    let text = render_text(&GameState::initial(&layout), &layout);
    assert!(text.lines().count() >= layout.height());
}
