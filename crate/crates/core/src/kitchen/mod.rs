//! The two-player cooperative kitchen: static layouts, dynamic state and the
//! deterministic transition function.
//!
//! Coordinates are `(row, col)` with row 0 at the top. All state values are
//! plain data, so a [`GameState`] or [`Layout`] can be cloned and sent across
//! threads freely.

mod dynamics;
mod layout;
mod render;
mod replay;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dynamics::{legal_interact_effect, step};
pub use layout::{
    canonical_layout, canonical_layouts, perturbed_layout, swap_tiles, Layout, LayoutMeta,
    PerturbationManifest, Rules, CANONICAL_LAYOUT_NAMES,
};
pub use render::render_text;
pub use replay::{replay, ReplayHeader, ReplayLog};

/// Shared reward for each soup delivered to a serving window.
pub const SOUP_REWARD: i32 = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KitchenError {
    #[error("MalformedGrid: {0}")]
    MalformedGrid(String),
    #[error("MissingFeature: layout has no {0:?}")]
    MissingFeature(TileKind),
    #[error("BadStarts: {0}")]
    BadStarts(String),
    #[error("OpenBoundary: floor cell {0} on the grid boundary")]
    OpenBoundary(Pos),
    #[error("InvalidSwap: {0}")]
    InvalidSwap(String),
    #[error("InconsistentState: {0}")]
    InconsistentState(String),
    #[error("LogLengthExceedsHorizon: {len} joint actions for horizon {horizon}")]
    LogLengthExceedsHorizon { len: usize, horizon: u32 },
    #[error("UnknownLayout: {0}")]
    UnknownLayout(String),
    #[error("replay log: {0}")]
    BadLog(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub row: i32,
    pub col: i32,
}

impl Pos {
    pub const fn new(row: i32, col: i32) -> Self {
        Pos { row, col }
    }

    pub fn offset(self, dir: Direction) -> Pos {
        let (dr, dc) = dir.delta();
        Pos::new(self.row + dr, self.col + dc)
    }

    pub fn manhattan(self, other: Pos) -> i32 {
        (self.row - other.row).abs() + (self.col - other.col).abs()
    }
}

impl std::fmt::Display for Pos {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Direction::Up => (-1, 0),
            Direction::Down => (1, 0),
            Direction::Left => (0, -1),
            Direction::Right => (0, 1),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn mirrored_horizontally(self) -> Direction {
        match self {
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
            d => d,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TileKind {
    Floor,
    Counter,
    OnionDispenser,
    DishDispenser,
    Pot,
    ServingWindow,
}

impl TileKind {
    pub const ALL: [TileKind; 6] = [
        TileKind::Floor,
        TileKind::Counter,
        TileKind::OnionDispenser,
        TileKind::DishDispenser,
        TileKind::Pot,
        TileKind::ServingWindow,
    ];

    pub fn is_walkable(self) -> bool {
        self == TileKind::Floor
    }

    pub fn symbol(self) -> char {
        match self {
            TileKind::Floor => ' ',
            TileKind::Counter => 'X',
            TileKind::OnionDispenser => 'O',
            TileKind::DishDispenser => 'D',
            TileKind::Pot => 'P',
            TileKind::ServingWindow => 'S',
        }
    }

    pub fn from_symbol(c: char) -> Option<TileKind> {
        TileKind::ALL.into_iter().find(|k| k.symbol() == c)
    }
}

/// Something a player can carry or leave on a counter. An empty hand is
/// `None` wherever an `Option<Object>` appears.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Object {
    Onion,
    Dish,
    Soup,
}

impl Object {
    pub const ALL: [Object; 3] = [Object::Onion, Object::Dish, Object::Soup];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct PotState {
    pub onions: u8,
    /// `None` while idle; counts down to zero once the pot is full.
    pub cook_remaining: Option<u8>,
}

impl PotState {
    pub fn is_cooking(&self) -> bool {
        matches!(self.cook_remaining, Some(r) if r > 0)
    }

    pub fn is_ready(&self) -> bool {
        self.cook_remaining == Some(0)
    }

    pub fn accepts_onion(&self, capacity: u8) -> bool {
        self.cook_remaining.is_none() && self.onions < capacity
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlayerState {
    pub position: Pos,
    pub orientation: Direction,
    pub held: Option<Object>,
}

impl PlayerState {
    pub fn facing(&self) -> Pos {
        self.position.offset(self.orientation)
    }
}

/// Dynamic world snapshot. `pots` holds one entry per pot tile of the layout
/// and `counters` only the counter cells that currently carry an object; both
/// are kept sorted by position.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GameState {
    pub players: [PlayerState; 2],
    pub pots: Vec<(Pos, PotState)>,
    pub counters: Vec<(Pos, Object)>,
    pub tick: u32,
    pub score: u32,
}

impl GameState {
    /// Standard start state: players on their start cells facing down with
    /// empty hands, idle empty pots, bare counters.
    pub fn initial(layout: &Layout) -> GameState {
        let players = layout.starts().map(|position| PlayerState {
            position,
            orientation: Direction::Down,
            held: None,
        });
        GameState {
            players,
            pots: layout.pots().iter().map(|&p| (p, PotState::default())).collect(),
            counters: Vec::new(),
            tick: 0,
            score: 0,
        }
    }

    pub fn pot(&self, pos: Pos) -> Option<&PotState> {
        self.pots
            .binary_search_by_key(&pos, |(p, _)| *p)
            .ok()
            .map(|i| &self.pots[i].1)
    }

    pub(crate) fn pot_mut(&mut self, pos: Pos) -> Option<&mut PotState> {
        self.pots
            .binary_search_by_key(&pos, |(p, _)| *p)
            .ok()
            .map(move |i| &mut self.pots[i].1)
    }

    pub fn counter_object(&self, pos: Pos) -> Option<Object> {
        self.counters
            .binary_search_by_key(&pos, |(p, _)| *p)
            .ok()
            .map(|i| self.counters[i].1)
    }

    pub fn set_counter(&mut self, pos: Pos, object: Option<Object>) {
        match (self.counters.binary_search_by_key(&pos, |(p, _)| *p), object) {
            (Ok(i), Some(o)) => self.counters[i].1 = o,
            (Ok(i), None) => {
                self.counters.remove(i);
            }
            (Err(i), Some(o)) => self.counters.insert(i, (pos, o)),
            (Err(_), None) => {}
        }
    }

    pub fn player_at(&self, pos: Pos) -> Option<usize> {
        self.players.iter().position(|p| p.position == pos)
    }

    /// Stable content hash (hex SHA-256 of the canonical JSON form).
    pub fn state_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let bytes = serde_json::to_vec(self).expect("game state serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Check the state against the static layout.
    pub fn validate(&self, layout: &Layout) -> Result<(), KitchenError> {
        let bad = |m: String| Err(KitchenError::InconsistentState(m));
        for (i, p) in self.players.iter().enumerate() {
            if !layout.is_walkable(p.position) {
                return bad(format!("player {i} at non-floor cell {}", p.position));
            }
        }
        if self.players[0].position == self.players[1].position {
            return bad("players share a cell".into());
        }
        if self.pots.len() != layout.pots().len()
            || self.pots.iter().zip(layout.pots()).any(|((a, _), b)| a != b)
        {
            return bad("pot entries do not match layout pots".into());
        }
        let cap = layout.rules().pot_capacity;
        for (pos, pot) in &self.pots {
            if pot.onions > cap
                || (pot.cook_remaining.is_some() && pot.onions != cap)
                || pot.cook_remaining.is_some_and(|r| r > layout.rules().cook_time)
            {
                return bad(format!("pot at {pos} has invalid state {pot:?}"));
            }
        }
        if self.counters.windows(2).any(|w| w[0].0 >= w[1].0) {
            return bad("counter entries not sorted".into());
        }
        for (pos, _) in &self.counters {
            if layout.tile(*pos) != Some(TileKind::Counter) {
                return bad(format!("object on non-counter cell {pos}"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Interact,
    Stay,
}

impl Action {
    pub const COUNT: usize = 6;
    pub const ALL: [Action; 6] = [
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
        Action::Interact,
        Action::Stay,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    pub fn direction(self) -> Option<Direction> {
        match self {
            Action::Up => Some(Direction::Up),
            Action::Down => Some(Direction::Down),
            Action::Left => Some(Direction::Left),
            Action::Right => Some(Direction::Right),
            _ => None,
        }
    }

    pub fn from_direction(d: Direction) -> Action {
        match d {
            Direction::Up => Action::Up,
            Direction::Down => Action::Down,
            Direction::Left => Action::Left,
            Direction::Right => Action::Right,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
            Action::Interact => "interact",
            Action::Stay => "stay",
        }
    }
}

impl std::str::FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown action {s:?}"))
    }
}

/// The state delta caused by an Interact. There is one kind per concrete
/// sub-task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractKind {
    PickedOnionFromDispenser,
    PickedOnionFromCounter,
    PickedDishFromDispenser,
    PickedDishFromCounter,
    PlacedOnionInPot,
    PlacedOnionOnCounter,
    LoadedSoupFromPot,
    PlacedDishOnCounter,
    PickedSoupFromCounter,
    PlacedSoupOnCounter,
    ServedSoup,
}

impl InteractKind {
    pub const ALL: [InteractKind; 11] = [
        InteractKind::PickedOnionFromDispenser,
        InteractKind::PickedOnionFromCounter,
        InteractKind::PickedDishFromDispenser,
        InteractKind::PickedDishFromCounter,
        InteractKind::PlacedOnionInPot,
        InteractKind::PlacedOnionOnCounter,
        InteractKind::LoadedSoupFromPot,
        InteractKind::PlacedDishOnCounter,
        InteractKind::PickedSoupFromCounter,
        InteractKind::PlacedSoupOnCounter,
        InteractKind::ServedSoup,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InteractEvent {
    pub kind: InteractKind,
    /// The tile the player interacted with.
    pub target: Pos,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub next: GameState,
    pub reward: i32,
    pub events: [Option<InteractEvent>; 2],
}

/// Convenience alias for the standard start state.
pub fn initial_state(layout: &Layout) -> GameState {
    GameState::initial(layout)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_indices_round_trip() {
        assert_eq!(Action::ALL.len(), Action::COUNT);
        for (i, a) in Action::ALL.iter().enumerate() {
            assert_eq!(a.index(), i);
            assert_eq!(Action::from_index(i), Some(*a));
            assert_eq!(a.name().parse::<Action>().unwrap(), *a);
        }
        assert_eq!(serde_json::to_string(&Action::Interact).unwrap(), "\"interact\"");
    }

    #[test]
    fn counter_map_stays_sorted() {
        let layout = canonical_layout("cramped_room").unwrap();
        let mut s = GameState::initial(&layout);
        s.set_counter(Pos::new(3, 2), Some(Object::Dish));
        s.set_counter(Pos::new(0, 0), Some(Object::Onion));
        s.set_counter(Pos::new(2, 0), Some(Object::Soup));
        assert!(s.validate(&layout).is_ok());
        assert_eq!(s.counter_object(Pos::new(2, 0)), Some(Object::Soup));
        s.set_counter(Pos::new(2, 0), None);
        assert_eq!(s.counter_object(Pos::new(2, 0)), None);
        assert_eq!(s.counters.len(), 2);
    }

    #[test]
    fn initial_state_is_pure() {
        for layout in canonical_layouts() {
            let a = initial_state(&layout);
            let b = initial_state(&layout);
            assert_eq!(a, b);
            assert_eq!(a.state_hash(), b.state_hash());
            assert_eq!((a.tick, a.score), (0, 0));
            assert!(a.players.iter().all(|p| p.held.is_none() && p.orientation == Direction::Down));
            assert!(a.pots.iter().all(|(_, p)| *p == PotState::default()));
        }
    }
}
