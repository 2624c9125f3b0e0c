//! The twelve interact-delimited sub-tasks shared by the manager and worker:
//! classification of interact events, feasibility masks, and goal layers.

use serde::{Deserialize, Serialize};

use crate::kitchen::{
    GameState, InteractEvent, InteractKind, Layout, Object, Pos, StepOutcome, TileKind,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubTask {
    PickupOnionFromDispenser,
    PickupOnionFromCounter,
    PickupDishFromDispenser,
    PickupDishFromCounter,
    PlaceOnionInPot,
    PlaceOnionOnCounter,
    GetSoupFromPot,
    PlaceDishOnCounter,
    PickupSoupFromCounter,
    PlaceSoupOnCounter,
    ServeSoup,
    Unknown,
}

impl SubTask {
    pub const COUNT: usize = 12;

    pub const ALL: [SubTask; 12] = [
        SubTask::PickupOnionFromDispenser,
        SubTask::PickupOnionFromCounter,
        SubTask::PickupDishFromDispenser,
        SubTask::PickupDishFromCounter,
        SubTask::PlaceOnionInPot,
        SubTask::PlaceOnionOnCounter,
        SubTask::GetSoupFromPot,
        SubTask::PlaceDishOnCounter,
        SubTask::PickupSoupFromCounter,
        SubTask::PlaceSoupOnCounter,
        SubTask::ServeSoup,
        SubTask::Unknown,
    ];

    /// Everything except `Unknown`.
    pub const CONCRETE: [SubTask; 11] = [
        SubTask::PickupOnionFromDispenser,
        SubTask::PickupOnionFromCounter,
        SubTask::PickupDishFromDispenser,
        SubTask::PickupDishFromCounter,
        SubTask::PlaceOnionInPot,
        SubTask::PlaceOnionOnCounter,
        SubTask::GetSoupFromPot,
        SubTask::PlaceDishOnCounter,
        SubTask::PickupSoupFromCounter,
        SubTask::PlaceSoupOnCounter,
        SubTask::ServeSoup,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<SubTask> {
        SubTask::ALL.get(i).copied()
    }

    pub fn is_concrete(self) -> bool {
        self != SubTask::Unknown
    }

    pub fn name(self) -> &'static str {
        match self {
            SubTask::PickupOnionFromDispenser => "pickup_onion_from_dispenser",
            SubTask::PickupOnionFromCounter => "pickup_onion_from_counter",
            SubTask::PickupDishFromDispenser => "pickup_dish_from_dispenser",
            SubTask::PickupDishFromCounter => "pickup_dish_from_counter",
            SubTask::PlaceOnionInPot => "place_onion_in_pot",
            SubTask::PlaceOnionOnCounter => "place_onion_on_counter",
            SubTask::GetSoupFromPot => "get_soup_from_pot",
            SubTask::PlaceDishOnCounter => "place_dish_on_counter",
            SubTask::PickupSoupFromCounter => "pickup_soup_from_counter",
            SubTask::PlaceSoupOnCounter => "place_soup_on_counter",
            SubTask::ServeSoup => "serve_soup",
            SubTask::Unknown => "unknown",
        }
    }

    /// What the player must be holding for the sub-task to make sense.
    pub fn required_held(self) -> Option<Option<Object>> {
        use SubTask::*;
        Some(match self {
            PickupOnionFromDispenser | PickupOnionFromCounter | PickupDishFromDispenser
            | PickupDishFromCounter | PickupSoupFromCounter => None,
            PlaceOnionInPot | PlaceOnionOnCounter => Some(Object::Onion),
            GetSoupFromPot | PlaceDishOnCounter => Some(Object::Dish),
            PlaceSoupOnCounter | ServeSoup => Some(Object::Soup),
            Unknown => return None,
        })
    }

    /// The interact effect that completes this sub-task.
    pub fn completing_interact(self) -> Option<InteractKind> {
        use InteractKind as K;
        Some(match self {
            SubTask::PickupOnionFromDispenser => K::PickedOnionFromDispenser,
            SubTask::PickupOnionFromCounter => K::PickedOnionFromCounter,
            SubTask::PickupDishFromDispenser => K::PickedDishFromDispenser,
            SubTask::PickupDishFromCounter => K::PickedDishFromCounter,
            SubTask::PlaceOnionInPot => K::PlacedOnionInPot,
            SubTask::PlaceOnionOnCounter => K::PlacedOnionOnCounter,
            SubTask::GetSoupFromPot => K::LoadedSoupFromPot,
            SubTask::PlaceDishOnCounter => K::PlacedDishOnCounter,
            SubTask::PickupSoupFromCounter => K::PickedSoupFromCounter,
            SubTask::PlaceSoupOnCounter => K::PlacedSoupOnCounter,
            SubTask::ServeSoup => K::ServedSoup,
            SubTask::Unknown => return None,
        })
    }

    pub fn is_counter_task(self) -> bool {
        matches!(
            self,
            SubTask::PickupOnionFromCounter
                | SubTask::PickupDishFromCounter
                | SubTask::PickupSoupFromCounter
                | SubTask::PlaceOnionOnCounter
                | SubTask::PlaceDishOnCounter
                | SubTask::PlaceSoupOnCounter
        )
    }
}

impl std::fmt::Display for SubTask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SubTask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SubTask::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown sub-task {s:?}"))
    }
}

/// Map an interact effect to the sub-task it completes.
pub fn classify_event(event: &InteractEvent) -> SubTask {
    use InteractKind as K;
    match event.kind {
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

/// Bitset over the twelve sub-tasks. `Unknown` is always set.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubTaskMask(u16);

impl SubTaskMask {
    pub fn only_unknown() -> Self {
        SubTaskMask(1 << SubTask::Unknown.index())
    }

    pub fn contains(&self, t: SubTask) -> bool {
        self.0 & (1 << t.index()) != 0
    }

    pub fn insert(&mut self, t: SubTask) {
        self.0 |= 1 << t.index();
    }

    pub fn bits(&self) -> u16 {
        self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = SubTask> + '_ {
        SubTask::ALL.into_iter().filter(|t| self.contains(*t))
    }

    pub fn concrete(&self) -> impl Iterator<Item = SubTask> + '_ {
        self.iter().filter(|t| t.is_concrete())
    }

    pub fn has_concrete(&self) -> bool {
        self.concrete().next().is_some()
    }

    pub fn to_bools(&self) -> [bool; SubTask::COUNT] {
        SubTask::ALL.map(|t| self.contains(t))
    }
}

impl std::fmt::Debug for SubTaskMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.iter().map(SubTask::name)).finish()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeasibilityConfig {
    /// Require a target to be walkable-to with the teammate as an obstacle.
    pub reachability: bool,
    /// Allow `GetSoupFromPot` while a pot is still cooking.
    pub soup_while_cooking: bool,
}

impl Default for FeasibilityConfig {
    fn default() -> Self {
        FeasibilityConfig {
            reachability: true,
            soup_while_cooking: true,
        }
    }
}

/// Cells satisfying a sub-task's target predicate, ignoring the held object
/// and reachability.
pub fn target_cells(state: &GameState, layout: &Layout, task: SubTask, cfg: &FeasibilityConfig) -> Vec<Pos> {
    let cap = layout.rules().pot_capacity;
    let counters_with = |o: Object| -> Vec<Pos> {
        state.counters.iter().filter(|(_, x)| *x == o).map(|(p, _)| *p).collect()
    };
    let empty_counters = || -> Vec<Pos> {
        layout
            .counters()
            .iter()
            .copied()
            .filter(|&p| state.counter_object(p).is_none())
            .collect()
    };
    match task {
        SubTask::PickupOnionFromDispenser => layout.cells(TileKind::OnionDispenser).to_vec(),
        SubTask::PickupDishFromDispenser => layout.cells(TileKind::DishDispenser).to_vec(),
        SubTask::PickupOnionFromCounter => counters_with(Object::Onion),
        SubTask::PickupDishFromCounter => counters_with(Object::Dish),
        SubTask::PickupSoupFromCounter => counters_with(Object::Soup),
        SubTask::PlaceOnionOnCounter | SubTask::PlaceDishOnCounter | SubTask::PlaceSoupOnCounter => {
            empty_counters()
        }
        SubTask::PlaceOnionInPot => state
            .pots
            .iter()
            .filter(|(_, pot)| pot.accepts_onion(cap))
            .map(|(p, _)| *p)
            .collect(),
        SubTask::GetSoupFromPot => state
            .pots
            .iter()
            .filter(|(_, pot)| pot.is_ready() || (cfg.soup_while_cooking && pot.is_cooking()))
            .map(|(p, _)| *p)
            .collect(),
        SubTask::ServeSoup => layout.cells(TileKind::ServingWindow).to_vec(),
        SubTask::Unknown => Vec::new(),
    }
}

/// Targets of `task` that `player` can currently act on: held-object
/// precondition satisfied and, if configured, some target adjacent to a
/// reachable floor cell.
pub fn feasible_targets(
    state: &GameState,
    player: usize,
    layout: &Layout,
    task: SubTask,
    cfg: &FeasibilityConfig,
    dist: Option<&[Option<u32>]>,
) -> Vec<Pos> {
    if task.required_held() != Some(state.players[player].held) {
        return Vec::new();
    }
    let targets = target_cells(state, layout, task, cfg);
    if !cfg.reachability || targets.is_empty() {
        return targets;
    }
    let owned;
    let dist = match dist {
        Some(d) => d,
        None => {
            owned = reach_distances(state, player, layout);
            &owned
        }
    };
    if layout.nearest_adjacent(dist, &targets).is_some() {
        targets
    } else {
        Vec::new()
    }
}

/// Walking distances for `player` with the teammate's cell blocked.
pub fn reach_distances(state: &GameState, player: usize, layout: &Layout) -> Vec<Option<u32>> {
    let me = state.players[player].position;
    let mate = state.players[1 - player].position;
    layout.distances_from(me, Some(mate))
}

pub fn feasible_mask(state: &GameState, player: usize, layout: &Layout) -> SubTaskMask {
    feasible_mask_with(state, player, layout, &FeasibilityConfig::default())
}

pub fn feasible_mask_with(
    state: &GameState,
    player: usize,
    layout: &Layout,
    cfg: &FeasibilityConfig,
) -> SubTaskMask {
    let dist = cfg.reachability.then(|| reach_distances(state, player, layout));
    let mut mask = SubTaskMask::only_unknown();
    for task in SubTask::CONCRETE {
        if !feasible_targets(state, player, layout, task, cfg, dist.as_deref()).is_empty() {
            mask.insert(task);
        }
    }
    mask
}

/// Binary layout-sized grid marking the current sub-task's end locations.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalLayer {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<u8>,
}

impl GoalLayer {
    pub fn empty(layout: &Layout) -> GoalLayer {
        GoalLayer {
            width: layout.width(),
            height: layout.height(),
            cells: vec![0; layout.width() * layout.height()],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.cells.iter().all(|&c| c == 0)
    }

    pub fn get(&self, p: Pos) -> u8 {
        if p.row < 0 || p.col < 0 || p.row as usize >= self.height || p.col as usize >= self.width {
            return 0;
        }
        self.cells[p.row as usize * self.width + p.col as usize]
    }

    pub fn marked(&self) -> Vec<Pos> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(i, _)| Pos::new((i / self.width) as i32, (i % self.width) as i32))
            .collect()
    }
}

pub fn goal_layer(state: &GameState, player: usize, task: SubTask, layout: &Layout) -> GoalLayer {
    goal_layer_with(state, player, task, layout, &FeasibilityConfig::default())
}

/// All qualifying target cells when the sub-task is feasible; all zero for
/// `Unknown` or an infeasible sub-task.
pub fn goal_layer_with(
    state: &GameState,
    player: usize,
    task: SubTask,
    layout: &Layout,
    cfg: &FeasibilityConfig,
) -> GoalLayer {
    let mut layer = GoalLayer::empty(layout);
    for p in feasible_targets(state, player, layout, task, cfg, None) {
        layer.cells[layout.index(p)] = 1;
    }
    layer
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Completion {
    Completed,
    WrongInteract,
    NoInteract,
}

pub fn completion_check(outcome: &StepOutcome, player: usize, assigned: SubTask) -> Completion {
    match outcome.events[player] {
        Some(e) if classify_event(&e) == assigned => Completion::Completed,
        Some(_) => Completion::WrongInteract,
        None => Completion::NoInteract,
    }
}
