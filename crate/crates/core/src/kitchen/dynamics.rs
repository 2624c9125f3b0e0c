use super::{
    Action, GameState, InteractEvent, InteractKind, KitchenError, Layout, Object, StepOutcome,
    TileKind, SOUP_REWARD,
};

/// What an Interact by `player` would do in `state`, without applying it.
pub fn legal_interact_effect(state: &GameState, player: usize, layout: &Layout) -> Option<InteractEvent> {
    let me = &state.players[player];
    let target = me.facing();
    let tile = layout.tile(target)?;
    let cap = layout.rules().pot_capacity;
    let kind = match (tile, me.held) {
        (TileKind::OnionDispenser, None) => InteractKind::PickedOnionFromDispenser,
        (TileKind::DishDispenser, None) => InteractKind::PickedDishFromDispenser,
        (TileKind::Counter, None) => match state.counter_object(target)? {
            Object::Onion => InteractKind::PickedOnionFromCounter,
            Object::Dish => InteractKind::PickedDishFromCounter,
            Object::Soup => InteractKind::PickedSoupFromCounter,
        },
        (TileKind::Counter, Some(held)) if state.counter_object(target).is_none() => match held {
            Object::Onion => InteractKind::PlacedOnionOnCounter,
            Object::Dish => InteractKind::PlacedDishOnCounter,
            Object::Soup => InteractKind::PlacedSoupOnCounter,
        },
        (TileKind::Pot, Some(Object::Onion)) if state.pot(target)?.accepts_onion(cap) => {
            InteractKind::PlacedOnionInPot
        }
        (TileKind::Pot, Some(Object::Dish)) if state.pot(target)?.is_ready() => {
            InteractKind::LoadedSoupFromPot
        }
        (TileKind::ServingWindow, Some(Object::Soup)) => InteractKind::ServedSoup,
        _ => return None,
    };
    Some(InteractEvent { kind, target })
}

/// Apply an event predicted by [`legal_interact_effect`]. Returns the reward.
fn apply_event(state: &mut GameState, player: usize, event: InteractEvent, layout: &Layout) -> i32 {
    let rules = layout.rules();
    use InteractKind::*;
    let held = &mut state.players[player].held;
    match event.kind {
        PickedOnionFromDispenser => *held = Some(Object::Onion),
        PickedDishFromDispenser => *held = Some(Object::Dish),
        PickedOnionFromCounter | PickedDishFromCounter | PickedSoupFromCounter => {
            let object = state.counter_object(event.target);
            state.set_counter(event.target, None);
            state.players[player].held = object;
        }
        PlacedOnionOnCounter | PlacedDishOnCounter | PlacedSoupOnCounter => {
            let object = held.take();
            state.set_counter(event.target, object);
        }
        PlacedOnionInPot => {
            *held = None;
            let pot = state.pot_mut(event.target).expect("pot exists");
            pot.onions += 1;
            if pot.onions == rules.pot_capacity {
                pot.cook_remaining = Some(rules.cook_time);
            }
        }
        LoadedSoupFromPot => {
            *held = Some(Object::Soup);
            *state.pot_mut(event.target).expect("pot exists") = Default::default();
        }
        ServedSoup => {
            *held = None;
            return SOUP_REWARD;
        }
    }
    0
}

/// Advance the world by one tick.
///
/// Order within a tick: interacts (player 0 then player 1, from pre-move
/// positions), simultaneous movement, then pot timers.
pub fn step(state: &GameState, joint: [Action; 2], layout: &Layout) -> Result<StepOutcome, KitchenError> {
    state.validate(layout)?;
    Ok(step_unchecked(state, joint, layout))
}

pub(crate) fn step_unchecked(state: &GameState, joint: [Action; 2], layout: &Layout) -> StepOutcome {
    let mut next = state.clone();
    let mut reward = 0;
    let mut events = [None, None];
    for player in 0..2 {
        if joint[player] == Action::Interact {
            if let Some(event) = legal_interact_effect(&next, player, layout) {
                reward += apply_event(&mut next, player, event, layout);
                events[player] = Some(event);
            }
        }
    }

    resolve_movement(&mut next, joint, layout);

    for (_, pot) in next.pots.iter_mut() {
        if let Some(r) = pot.cook_remaining.as_mut() {
            *r = r.saturating_sub(1);
        }
    }
    next.tick += 1;
    next.score += reward as u32;
    StepOutcome { next, reward, events }
}

fn resolve_movement(state: &mut GameState, joint: [Action; 2], layout: &Layout) {
    let old = [state.players[0].position, state.players[1].position];
    let mut new = old;
    for i in 0..2 {
        if let Some(dir) = joint[i].direction() {
            state.players[i].orientation = dir;
            let target = old[i].offset(dir);
            if layout.is_walkable(target) {
                new[i] = target;
            }
        }
    }
    let swapped = new[0] == old[1] && new[1] == old[0];
    if new[0] == new[1] || swapped {
        new = old;
    }
    state.players[0].position = new[0];
    state.players[1].position = new[1];
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kitchen::{canonical_layout, Direction, Pos, PotState};

    fn cramped() -> Layout {
        canonical_layout("cramped_room").unwrap()
    }

    #[test]
    fn stay_only_advances_tick_and_timers() {
        let l = cramped();
        let mut s = GameState::initial(&l);
        s.pots[0].1 = PotState { onions: 3, cook_remaining: Some(5) };
        let out = step(&s, [Action::Stay, Action::Stay], &l).unwrap();
        let mut expected = s.clone();
        expected.tick = 1;
        expected.pots[0].1.cook_remaining = Some(4);
        assert_eq!(out.next, expected);
        assert_eq!(out.reward, 0);
        assert_eq!(out.events, [None, None]);
    }

    #[test]
    fn serving_soup_pays_twenty() {
        let l = cramped();
        let mut s = GameState::initial(&l);
        // (2,3) faces the window at (3,3) when looking down
        s.players[1].position = Pos::new(2, 3);
        s.players[1].held = Some(Object::Soup);
        let out = step(&s, [Action::Stay, Action::Interact], &l).unwrap();
        assert_eq!(out.reward, 20);
        assert_eq!(out.next.score, 20);
        assert_eq!(out.next.players[1].held, None);
        assert_eq!(out.events[1].unwrap().kind, InteractKind::ServedSoup);
    }

    #[test]
    fn full_pot_rejects_onion() {
        let l = cramped();
        let mut s = GameState::initial(&l);
        s.players[1].position = Pos::new(1, 2);
        s.players[1].orientation = Direction::Up;
        s.players[1].held = Some(Object::Onion);
        s.pots[0].1 = PotState { onions: 3, cook_remaining: Some(10) };
        assert_eq!(legal_interact_effect(&s, 1, &l), None);
        s.pots[0].1 = PotState { onions: 2, cook_remaining: None };
        let out = step(&s, [Action::Stay, Action::Interact], &l).unwrap();
        assert_eq!(out.next.pots[0].1, PotState { onions: 3, cook_remaining: Some(19) });
    }

    #[test]
    fn soup_cycle() {
        let l = cramped();
        let mut s = GameState::initial(&l);
        s.players[1].position = Pos::new(1, 2);
        s.players[1].orientation = Direction::Up;
        s.players[1].held = Some(Object::Dish);
        s.pots[0].1 = PotState { onions: 3, cook_remaining: Some(1) };
        // still cooking at the start of this tick: nothing happens
        let out = step(&s, [Action::Stay, Action::Interact], &l).unwrap();
        assert_eq!(out.events[1], None);
        assert!(out.next.pots[0].1.is_ready());
        let out = step(&out.next, [Action::Stay, Action::Interact], &l).unwrap();
        assert_eq!(out.events[1].unwrap().kind, InteractKind::LoadedSoupFromPot);
        assert_eq!(out.next.players[1].held, Some(Object::Soup));
        assert_eq!(out.next.pots[0].1, PotState::default());
    }

    #[test]
    fn counter_place_and_pick() {
        let l = cramped();
        let mut s = GameState::initial(&l);
        // player 0 at (2,1) facing left towards the counter at (2,0)
        s.players[0].orientation = Direction::Left;
        s.players[0].held = Some(Object::Dish);
        let out = step(&s, [Action::Interact, Action::Stay], &l).unwrap();
        assert_eq!(out.events[0].unwrap().kind, InteractKind::PlacedDishOnCounter);
        assert_eq!(out.next.counter_object(Pos::new(2, 0)), Some(Object::Dish));
        let out = step(&out.next, [Action::Interact, Action::Stay], &l).unwrap();
        assert_eq!(out.events[0].unwrap().kind, InteractKind::PickedDishFromCounter);
        assert!(out.next.counters.is_empty());
    }

    #[test]
    fn blocked_move_turns_in_place() {
        let l = cramped();
        let s = GameState::initial(&l);
        let out = step(&s, [Action::Left, Action::Stay], &l).unwrap();
        assert_eq!(out.next.players[0].position, s.players[0].position);
        assert_eq!(out.next.players[0].orientation, Direction::Left);
    }

    #[test]
    fn following_into_a_vacated_cell_is_allowed() {
        let l = cramped();
        let mut s = GameState::initial(&l);
        s.players[0].position = Pos::new(1, 1);
        s.players[1].position = Pos::new(1, 2);
        let out = step(&s, [Action::Right, Action::Right], &l).unwrap();
        assert_eq!(out.next.players[0].position, Pos::new(1, 2));
        assert_eq!(out.next.players[1].position, Pos::new(1, 3));
    }

    #[test]
    fn inconsistent_state_is_rejected() {
        let l = cramped();
        let mut s = GameState::initial(&l);
        s.players[0].position = Pos::new(0, 0);
        assert!(matches!(step(&s, [Action::Stay; 2], &l), Err(KitchenError::InconsistentState(_))));
        let mut s = GameState::initial(&l);
        s.counters.push((Pos::new(1, 1), Object::Onion));
        assert!(step(&s, [Action::Stay; 2], &l).is_err());
    }
}
