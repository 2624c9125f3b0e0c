//! Observation encoders.
//!
//! The lossless encoding is a channel-major `[C, H, W]` grid of small
//! integers with the channel inventory listed in [`LOSSLESS_CHANNELS`].
//! Player channels are ordered relative to the ego player (ego first,
//! partner second). Derived views (goal layer, egocentric crop, frame stack)
//! operate on that tensor; policies consume the scaled `f32` form produced
//! by [`EncoderConfig::encode`].

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kitchen::{Direction, GameState, Layout, Object, PlayerState, Pos, PotState, TileKind};
use crate::subtasks::GoalLayer;

pub const LOSSLESS_CHANNELS: [&str; 29] = [
    "ego_position",
    "partner_position",
    "ego_facing_up",
    "ego_facing_down",
    "ego_facing_left",
    "ego_facing_right",
    "partner_facing_up",
    "partner_facing_down",
    "partner_facing_left",
    "partner_facing_right",
    "ego_holds_onion",
    "ego_holds_dish",
    "ego_holds_soup",
    "partner_holds_onion",
    "partner_holds_dish",
    "partner_holds_soup",
    "counter",
    "onion_dispenser",
    "dish_dispenser",
    "pot",
    "serving_window",
    "counter_onion",
    "counter_dish",
    "counter_soup",
    "pot_onions",
    "pot_cook_remaining",
    "pot_ready",
    "tick",
    "score",
];

const CH_POSITION: usize = 0;
const CH_FACING: usize = 2;
const CH_HOLDS: usize = 10;
const CH_STATIC: usize = 16;
const CH_COUNTER_OBJ: usize = 21;
const CH_POT_ONIONS: usize = 24;
const CH_POT_TIMER: usize = 25;
const CH_POT_READY: usize = 26;
const CH_TICK: usize = 27;
const CH_SCORE: usize = 28;
/// Channels that describe the world (everything but tick and score).
pub const WORLD_CHANNELS: usize = 27;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ObservationError {
    #[error("ShapeMismatch: observation is {obs:?}, goal layer is {goal:?}")]
    ShapeMismatch { obs: (usize, usize), goal: (usize, usize) },
    #[error("EncoderMismatch: {0}")]
    EncoderMismatch(String),
    #[error("cannot decode observation: {0}")]
    Decode(String),
}

/// Channel-major grid tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservationTensor {
    pub channels: Vec<&'static str>,
    pub height: usize,
    pub width: usize,
    pub data: Vec<i32>,
    pub ego_player: usize,
}

impl ObservationTensor {
    fn zeros(channels: Vec<&'static str>, height: usize, width: usize, ego_player: usize) -> Self {
        let n = channels.len() * height * width;
        ObservationTensor {
            channels,
            height,
            width,
            data: vec![0; n],
            ego_player,
        }
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    fn offset(&self, channel: usize, row: usize, col: usize) -> usize {
        (channel * self.height + row) * self.width + col
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> i32 {
        self.data[self.offset(channel, row, col)]
    }

    fn set(&mut self, channel: usize, p: Pos, v: i32) {
        let o = self.offset(channel, p.row as usize, p.col as usize);
        self.data[o] = v;
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| *c == name)
    }

    pub fn plane(&self, channel: usize) -> &[i32] {
        let n = self.height * self.width;
        &self.data[channel * n..(channel + 1) * n]
    }

    /// Scaled `f32` values of the first `channels` channels of every plane
    /// group. Counts and timers are normalized; binary channels pass through.
    pub fn to_input(&self, out: &mut Vec<f32>) {
        let n = self.height * self.width;
        for (ci, name) in self.channels.iter().enumerate() {
            let scale = match *name {
                "tick" | "score" => continue,
                "pot_onions" => 1.0 / 3.0,
                "pot_cook_remaining" => 1.0 / 20.0,
                _ => 1.0,
            };
            out.extend(self.data[ci * n..(ci + 1) * n].iter().map(|&v| v as f32 * scale));
        }
    }
}

fn orientation_channel(d: Direction) -> usize {
    d.index()
}

/// Lossless layered encoding of `state` from `ego`'s point of view.
pub fn encode_lossless(state: &GameState, layout: &Layout, ego: usize) -> ObservationTensor {
    let mut t = ObservationTensor::zeros(LOSSLESS_CHANNELS.to_vec(), layout.height(), layout.width(), ego);
    for (slot, idx) in [ego, 1 - ego].into_iter().enumerate() {
        let p = &state.players[idx];
        t.set(CH_POSITION + slot, p.position, 1);
        t.set(CH_FACING + 4 * slot + orientation_channel(p.orientation), p.position, 1);
        if let Some(o) = p.held {
            t.set(CH_HOLDS + 3 * slot + o.index(), p.position, 1);
        }
    }
    for (k, kind) in [
        TileKind::Counter,
        TileKind::OnionDispenser,
        TileKind::DishDispenser,
        TileKind::Pot,
        TileKind::ServingWindow,
    ]
    .into_iter()
    .enumerate()
    {
        for &p in layout.cells(kind) {
            t.set(CH_STATIC + k, p, 1);
        }
    }
    for &(p, o) in &state.counters {
        t.set(CH_COUNTER_OBJ + o.index(), p, 1);
    }
    for &(p, pot) in &state.pots {
        t.set(CH_POT_ONIONS, p, pot.onions as i32);
        t.set(CH_POT_TIMER, p, pot.cook_remaining.unwrap_or(0) as i32);
        t.set(CH_POT_READY, p, pot.is_ready() as i32);
    }
    let n = layout.height() * layout.width();
    t.data[CH_TICK * n..(CH_TICK + 1) * n].fill(state.tick as i32);
    t.data[CH_SCORE * n..(CH_SCORE + 1) * n].fill(state.score as i32);
    t
}

/// Reconstruct the game state from a full-grid lossless tensor.
pub fn decode_lossless(obs: &ObservationTensor, layout: &Layout) -> Result<GameState, ObservationError> {
    let err = |m: &str| ObservationError::Decode(m.to_owned());
    if obs.channels.len() < LOSSLESS_CHANNELS.len()
        || obs.channels[..LOSSLESS_CHANNELS.len()] != LOSSLESS_CHANNELS
        || obs.height != layout.height()
        || obs.width != layout.width()
    {
        return Err(err("not a full-grid lossless tensor for this layout"));
    }
    let cells = || {
        (0..obs.height).flat_map(move |r| (0..obs.width).map(move |c| Pos::new(r as i32, c as i32)))
    };
    let at = |ch: usize, p: Pos| obs.get(ch, p.row as usize, p.col as usize);
    let mut players = [None, None];
    for slot in 0..2 {
        let pos = cells()
            .find(|&p| at(CH_POSITION + slot, p) == 1)
            .ok_or_else(|| err("missing player position"))?;
        let orientation = Direction::ALL
            .into_iter()
            .find(|&d| at(CH_FACING + 4 * slot + orientation_channel(d), pos) == 1)
            .ok_or_else(|| err("missing orientation"))?;
        let held = Object::ALL.into_iter().find(|o| at(CH_HOLDS + 3 * slot + o.index(), pos) == 1);
        let idx = if slot == 0 { obs.ego_player } else { 1 - obs.ego_player };
        players[idx] = Some(PlayerState { position: pos, orientation, held });
    }
    let cap = layout.rules().pot_capacity as i32;
    let pots = layout
        .pots()
        .iter()
        .map(|&p| {
            let onions = at(CH_POT_ONIONS, p);
            let timer = at(CH_POT_TIMER, p);
            let ready = at(CH_POT_READY, p) == 1;
            let cook_remaining = (onions == cap).then_some(if ready { 0 } else { timer as u8 });
            (p, PotState { onions: onions as u8, cook_remaining })
        })
        .collect();
    let counters = cells()
        .filter_map(|p| {
            Object::ALL
                .into_iter()
                .find(|o| at(CH_COUNTER_OBJ + o.index(), p) == 1)
                .map(|o| (p, o))
        })
        .collect();
    Ok(GameState {
        players: [players[0].unwrap(), players[1].unwrap()],
        pots,
        counters,
        tick: obs.get(CH_TICK, 0, 0) as u32,
        score: obs.get(CH_SCORE, 0, 0) as u32,
    })
}

/// Append the goal layer as one extra binary channel named `goal`.
pub fn attach_goal_layer(obs: &ObservationTensor, goal: &GoalLayer) -> Result<ObservationTensor, ObservationError> {
    if (goal.height, goal.width) != (obs.height, obs.width) {
        return Err(ObservationError::ShapeMismatch {
            obs: (obs.height, obs.width),
            goal: (goal.height, goal.width),
        });
    }
    let mut out = obs.clone();
    out.channels.push("goal");
    out.data.extend(goal.cells.iter().map(|&v| (v != 0) as i32));
    Ok(out)
}

/// Window of `size × size` cells centered on `center`; cells outside the
/// grid read as counters.
pub fn egocentric_crop_sized(obs: &ObservationTensor, center: Pos, size: usize) -> ObservationTensor {
    let half = (size / 2) as i32;
    let mut out = ObservationTensor::zeros(obs.channels.clone(), size, size, obs.ego_player);
    let counter = obs.channel_index("counter");
    for r in 0..size {
        for c in 0..size {
            let src = Pos::new(center.row - half + r as i32, center.col - half + c as i32);
            let inside = src.row >= 0
                && src.col >= 0
                && (src.row as usize) < obs.height
                && (src.col as usize) < obs.width;
            for ch in 0..obs.channels.len() {
                let v = if inside {
                    obs.get(ch, src.row as usize, src.col as usize)
                } else {
                    (Some(ch) == counter) as i32
                };
                let o = out.offset(ch, r, c);
                out.data[o] = v;
            }
        }
    }
    out
}

/// The 7×7 egocentric view.
pub fn egocentric_crop(obs: &ObservationTensor, ego_position: Pos) -> ObservationTensor {
    egocentric_crop_sized(obs, ego_position, 7)
}

/// Place the grid in the top-left of a `height × width` canvas, filling the
/// rest as counters.
pub fn pad_to_canvas(obs: &ObservationTensor, height: usize, width: usize) -> Result<ObservationTensor, ObservationError> {
    if obs.height > height || obs.width > width {
        return Err(ObservationError::EncoderMismatch(format!(
            "grid {}x{} exceeds canvas {}x{}",
            obs.height, obs.width, height, width
        )));
    }
    let mut out = ObservationTensor::zeros(obs.channels.clone(), height, width, obs.ego_player);
    let counter = obs.channel_index("counter");
    for ch in 0..obs.channels.len() {
        for r in 0..height {
            for c in 0..width {
                let v = if r < obs.height && c < obs.width {
                    obs.get(ch, r, c)
                } else {
                    (Some(ch) == counter) as i32
                };
                let o = out.offset(ch, r, c);
                out.data[o] = v;
            }
        }
    }
    Ok(out)
}

/// Channel-concatenate the last `k` frames, newest last. Missing history at
/// episode start is filled with copies of the oldest available frame.
pub fn frame_stack(history: &[ObservationTensor], k: usize) -> ObservationTensor {
    assert!(k >= 1 && !history.is_empty(), "frame_stack needs k >= 1 and a frame");
    let take = history.len().min(k);
    let recent = &history[history.len() - take..];
    let mut frames: Vec<&ObservationTensor> = std::iter::repeat_n(&recent[0], k - take).collect();
    frames.extend(recent.iter());
    let first = frames[0];
    let mut out = ObservationTensor {
        channels: Vec::with_capacity(first.channels.len() * k),
        height: first.height,
        width: first.width,
        data: Vec::with_capacity(first.data.len() * k),
        ego_player: first.ego_player,
    };
    for f in frames {
        out.channels.extend_from_slice(&f.channels);
        out.data.extend_from_slice(&f.data);
    }
    out
}

/// How a policy sees the world.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum View {
    /// Square crop of the lossless grid centered on the ego player.
    Egocentric { size: usize },
    /// Whole lossless grid padded to a fixed canvas.
    FullGrid { height: usize, width: usize },
    /// Hand-crafted feature vector (behavioral cloning).
    Features,
}

/// Self-describing encoder settings; embedded in checkpoints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub view: View,
    #[serde(default)]
    pub goal_layer: bool,
    #[serde(default = "one")]
    pub frame_stack: usize,
}

fn one() -> usize {
    1
}

impl EncoderConfig {
    pub fn egocentric() -> Self {
        EncoderConfig {
            view: View::Egocentric { size: 7 },
            goal_layer: false,
            frame_stack: 1,
        }
    }

    pub fn full_grid(height: usize, width: usize) -> Self {
        EncoderConfig {
            view: View::FullGrid { height, width },
            goal_layer: false,
            frame_stack: 1,
        }
    }

    pub fn features() -> Self {
        EncoderConfig {
            view: View::Features,
            goal_layer: false,
            frame_stack: 1,
        }
    }

    pub fn with_goal_layer(mut self) -> Self {
        self.goal_layer = true;
        self
    }

    pub fn with_frame_stack(mut self, k: usize) -> Self {
        self.frame_stack = k.max(1);
        self
    }

    /// Error unless this encoder can observe `layout`.
    pub fn check_layout(&self, layout: &Layout) -> Result<(), ObservationError> {
        match self.view {
            View::FullGrid { height, width } if layout.height() > height || layout.width() > width => {
                Err(ObservationError::EncoderMismatch(format!(
                    "layout {} is {}x{}, canvas is {height}x{width}",
                    layout.name(),
                    layout.height(),
                    layout.width()
                )))
            }
            View::Egocentric { size } if size % 2 == 0 => Err(ObservationError::EncoderMismatch(
                "egocentric size must be odd".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Length of one encoded frame.
    pub fn frame_dim(&self, layout: &Layout) -> usize {
        let channels = WORLD_CHANNELS + self.goal_layer as usize;
        match self.view {
            View::Egocentric { size } => channels * size * size,
            View::FullGrid { height, width } => channels * height * width,
            View::Features => feature_dim(layout),
        }
    }

    pub fn input_dim(&self, layout: &Layout) -> usize {
        self.frame_dim(layout) * self.frame_stack
    }

    /// One scaled frame. `goal` is required iff the encoder has a goal layer.
    pub fn encode(
        &self,
        state: &GameState,
        layout: &Layout,
        ego: usize,
        goal: Option<&GoalLayer>,
    ) -> Result<Vec<f32>, ObservationError> {
        let mut out = Vec::with_capacity(self.frame_dim(layout));
        if self.view == View::Features {
            return Ok(encode_features(state, layout, ego).values);
        }
        let mut obs = encode_lossless(state, layout, ego);
        if self.goal_layer {
            let empty;
            let goal = match goal {
                Some(g) => g,
                None => {
                    empty = GoalLayer::empty(layout);
                    &empty
                }
            };
            obs = attach_goal_layer(&obs, goal)?;
        }
        let view = match self.view {
            View::Egocentric { size } => egocentric_crop_sized(&obs, state.players[ego].position, size),
            View::FullGrid { height, width } => pad_to_canvas(&obs, height, width)?,
            View::Features => unreachable!(),
        };
        view.to_input(&mut out);
        Ok(out)
    }
}

/// Rolling window of encoded frames for one seat in one episode.
#[derive(Clone, Debug, Default)]
pub struct FrameHistory {
    frames: VecDeque<Vec<f32>>,
}

impl FrameHistory {
    pub fn clear(&mut self) {
        self.frames.clear();
    }

    /// Push the newest frame and return the stacked input of depth `k`.
    pub fn push(&mut self, frame: Vec<f32>, k: usize) -> Vec<f32> {
        if k <= 1 {
            self.frames.clear();
            return frame;
        }
        self.frames.push_back(frame);
        while self.frames.len() > k {
            self.frames.pop_front();
        }
        let missing = k - self.frames.len();
        let mut out = Vec::with_capacity(self.frames[0].len() * k);
        for _ in 0..missing {
            out.extend_from_slice(&self.frames[0]);
        }
        for f in &self.frames {
            out.extend_from_slice(f);
        }
        out
    }
}

/// Flat feature vector for behavioral cloning.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub names: Vec<String>,
    pub values: Vec<f32>,
}

/// Targets whose nearest instance is reported as a relative offset.
pub const FEATURE_TARGETS: [&str; 6] = [
    "onion_source",
    "dish_source",
    "non_full_pot",
    "ready_pot",
    "serving_window",
    "empty_counter",
];

pub fn feature_dim(layout: &Layout) -> usize {
    let cells = layout.width() * layout.height();
    2 * (cells + 4 + 4) + 3 * layout.pots().len() + 3 * FEATURE_TARGETS.len() + 2
}

/// Cells of each offset target, in [`FEATURE_TARGETS`] order.
pub fn feature_target_cells(state: &GameState, layout: &Layout) -> [Vec<Pos>; 6] {
    let cap = layout.rules().pot_capacity;
    let counters_with = |o: Object| state.counters.iter().filter(move |(_, x)| *x == o).map(|(p, _)| *p);
    let mut onion: Vec<Pos> = layout.cells(TileKind::OnionDispenser).to_vec();
    onion.extend(counters_with(Object::Onion));
    let mut dish: Vec<Pos> = layout.cells(TileKind::DishDispenser).to_vec();
    dish.extend(counters_with(Object::Dish));
    [
        onion,
        dish,
        state.pots.iter().filter(|(_, p)| p.accepts_onion(cap)).map(|(p, _)| *p).collect(),
        state.pots.iter().filter(|(_, p)| p.is_ready()).map(|(p, _)| *p).collect(),
        layout.cells(TileKind::ServingWindow).to_vec(),
        layout.counters().iter().copied().filter(|&p| state.counter_object(p).is_none()).collect(),
    ]
}

/// Nearest target by walking distance to an adjacent floor cell (partner
/// cell blocked); ties go to the lowest `(row, col)`.
pub fn nearest_target(layout: &Layout, dist: &[Option<u32>], targets: &[Pos]) -> Option<Pos> {
    targets
        .iter()
        .filter_map(|&t| layout.nearest_adjacent(dist, &[t]).map(|d| (d, t)))
        .min()
        .map(|(_, t)| t)
}

pub fn encode_features(state: &GameState, layout: &Layout, ego: usize) -> FeatureVector {
    let mut names = Vec::with_capacity(feature_dim(layout));
    let mut values = Vec::with_capacity(feature_dim(layout));
    let mut push = |name: String, v: f32| {
        names.push(name);
        values.push(v);
    };
    let cells = layout.width() * layout.height();
    for (slot, idx) in [("ego", ego), ("partner", 1 - ego)] {
        let p = &state.players[idx];
        let at = layout.index(p.position);
        for i in 0..cells {
            push(format!("{slot}_at_{i}"), (i == at) as u8 as f32);
        }
        for d in Direction::ALL {
            push(format!("{slot}_facing_{d:?}"), (p.orientation == d) as u8 as f32);
        }
        for (name, held) in [
            ("nothing", None),
            ("onion", Some(Object::Onion)),
            ("dish", Some(Object::Dish)),
            ("soup", Some(Object::Soup)),
        ] {
            push(format!("{slot}_holds_{name}"), (p.held == held) as u8 as f32);
        }
    }
    let rules = layout.rules();
    for (i, (_, pot)) in state.pots.iter().enumerate() {
        push(format!("pot{i}_onions"), pot.onions as f32 / rules.pot_capacity as f32);
        push(
            format!("pot{i}_cook_remaining"),
            pot.cook_remaining.unwrap_or(0) as f32 / rules.cook_time.max(1) as f32,
        );
        push(format!("pot{i}_ready"), pot.is_ready() as u8 as f32);
    }
    let me = state.players[ego].position;
    let mate = state.players[1 - ego].position;
    let dist = layout.distances_from(me, Some(mate));
    let (h, w) = (layout.height() as i32, layout.width() as i32);
    for (name, targets) in FEATURE_TARGETS.iter().zip(feature_target_cells(state, layout)) {
        match nearest_target(layout, &dist, &targets) {
            Some(t) => {
                push(format!("{name}_present"), 1.0);
                push(format!("{name}_drow"), (t.row - me.row).clamp(-h, h) as f32);
                push(format!("{name}_dcol"), (t.col - me.col).clamp(-w, w) as f32);
            }
            None => {
                push(format!("{name}_present"), 0.0);
                push(format!("{name}_drow"), 0.0);
                push(format!("{name}_dcol"), 0.0);
            }
        }
    }
    push("partner_drow".into(), (mate.row - me.row) as f32);
    push("partner_dcol".into(), (mate.col - me.col) as f32);
    FeatureVector { names, values }
}
