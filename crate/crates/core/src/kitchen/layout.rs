use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Direction, KitchenError, Pos, TileKind};

/// Environment parameters that are not part of the grid itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct Rules {
    pub pot_capacity: u8,
    pub cook_time: u8,
    pub horizon: u32,
}

impl Default for Rules {
    fn default() -> Self {
        Rules {
            pot_capacity: 3,
            cook_time: 20,
            horizon: 400,
        }
    }
}

/// The two cells exchanged to derive a layout's modified variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationManifest {
    pub a: Pos,
    pub b: Pos,
}

/// Contents of the `<name>.meta.json` sidecar.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutMeta {
    pub name: String,
    #[serde(default)]
    pub perturbation: Option<PerturbationManifest>,
    #[serde(default)]
    pub rules: Option<Rules>,
}

/// Immutable static world: tile grid, start cells and rules.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "LayoutRepr", try_from = "LayoutRepr")]
pub struct Layout {
    name: String,
    width: usize,
    height: usize,
    tiles: Vec<TileKind>,
    starts: [Pos; 2],
    rules: Rules,
    // cached per-kind cell lists, sorted by position
    by_kind: [Vec<Pos>; 6],
}

#[derive(Serialize, Deserialize)]
struct LayoutRepr {
    name: String,
    grid: Vec<String>,
    #[serde(default)]
    rules: Rules,
}

impl From<Layout> for LayoutRepr {
    fn from(l: Layout) -> Self {
        LayoutRepr {
            grid: l.to_ascii().lines().map(str::to_owned).collect(),
            name: l.name,
            rules: l.rules,
        }
    }
}

impl TryFrom<LayoutRepr> for Layout {
    type Error = KitchenError;

    fn try_from(r: LayoutRepr) -> Result<Self, Self::Error> {
        Ok(Layout::parse(&r.name, &r.grid.join("\n"))?.with_rules(r.rules))
    }
}

fn kind_slot(kind: TileKind) -> usize {
    kind as usize
}

impl Layout {
    /// Parse an ASCII grid. Legend: `X` counter, `O` onion dispenser, `D` dish
    /// dispenser, `P` pot, `S` serving window, space floor, `1`/`2` the two
    /// player start cells (floor).
    pub fn parse(name: &str, text: &str) -> Result<Layout, KitchenError> {
        let rows: Vec<&str> = text
            .lines()
            .map(|l| l.trim_end_matches('\r'))
            .skip_while(|l| l.trim().is_empty())
            .collect();
        let rows: Vec<&str> = {
            let mut rows = rows;
            while rows.last().is_some_and(|l| l.trim().is_empty()) {
                rows.pop();
            }
            rows
        };
        if rows.is_empty() {
            return Err(KitchenError::MalformedGrid("empty grid".into()));
        }
        let width = rows[0].chars().count();
        let height = rows.len();
        let mut tiles = Vec::with_capacity(width * height);
        let mut starts: [Option<Pos>; 2] = [None, None];
        for (r, line) in rows.iter().enumerate() {
            if line.chars().count() != width {
                return Err(KitchenError::MalformedGrid(format!(
                    "row {r} has {} cells, expected {width}",
                    line.chars().count()
                )));
            }
            for (c, ch) in line.chars().enumerate() {
                let pos = Pos::new(r as i32, c as i32);
                let kind = match ch {
                    '1' | '2' => {
                        let slot = &mut starts[if ch == '1' { 0 } else { 1 }];
                        if slot.is_some() {
                            return Err(KitchenError::BadStarts(format!("duplicate start '{ch}'")));
                        }
                        *slot = Some(pos);
                        TileKind::Floor
                    }
                    other => TileKind::from_symbol(other).ok_or_else(|| {
                        KitchenError::MalformedGrid(format!("unknown cell {other:?} at {pos}"))
                    })?,
                };
                tiles.push(kind);
            }
        }
        let starts = match starts {
            [Some(a), Some(b)] => [a, b],
            _ => return Err(KitchenError::BadStarts("expected exactly two starts '1' and '2'".into())),
        };
        Layout::from_parts(name.to_owned(), width, height, tiles, starts, Rules::default())
    }

    pub(crate) fn from_parts(
        name: String,
        width: usize,
        height: usize,
        tiles: Vec<TileKind>,
        starts: [Pos; 2],
        rules: Rules,
    ) -> Result<Layout, KitchenError> {
        let mut by_kind: [Vec<Pos>; 6] = Default::default();
        for r in 0..height {
            for c in 0..width {
                let pos = Pos::new(r as i32, c as i32);
                let kind = tiles[r * width + c];
                let boundary = r == 0 || c == 0 || r + 1 == height || c + 1 == width;
                if boundary && kind == TileKind::Floor {
                    return Err(KitchenError::OpenBoundary(pos));
                }
                by_kind[kind_slot(kind)].push(pos);
            }
        }
        for kind in [
            TileKind::OnionDispenser,
            TileKind::DishDispenser,
            TileKind::Pot,
            TileKind::ServingWindow,
        ] {
            if by_kind[kind_slot(kind)].is_empty() {
                return Err(KitchenError::MissingFeature(kind));
            }
        }
        let layout = Layout {
            name,
            width,
            height,
            tiles,
            starts,
            rules,
            by_kind,
        };
        for s in starts {
            if !layout.is_walkable(s) {
                return Err(KitchenError::BadStarts(format!("start {s} is not floor")));
            }
        }
        if starts[0] == starts[1] {
            return Err(KitchenError::BadStarts("starts coincide".into()));
        }
        Ok(layout)
    }

    /// Load `<dir>/<name>.layout` and its optional `<name>.meta.json` sidecar.
    pub fn load(dir: &Path, name: &str) -> Result<(Layout, Option<LayoutMeta>), KitchenError> {
        let io = |e: std::io::Error| KitchenError::MalformedGrid(format!("{name}: {e}"));
        let text = std::fs::read_to_string(dir.join(format!("{name}.layout"))).map_err(io)?;
        let meta_path = dir.join(format!("{name}.meta.json"));
        let meta: Option<LayoutMeta> = if meta_path.exists() {
            let raw = std::fs::read_to_string(meta_path).map_err(io)?;
            Some(
                serde_json::from_str(&raw)
                    .map_err(|e| KitchenError::MalformedGrid(format!("{name}.meta.json: {e}")))?,
            )
        } else {
            None
        };
        let mut layout = Layout::parse(name, &text)?;
        if let Some(rules) = meta.as_ref().and_then(|m| m.rules) {
            layout.rules = rules;
        }
        Ok((layout, meta))
    }

    pub fn with_rules(mut self, rules: Rules) -> Layout {
        self.rules = rules;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Layout {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn starts(&self) -> [Pos; 2] {
        self.starts
    }

    pub fn rules(&self) -> &Rules {
        &self.rules
    }

    pub fn in_bounds(&self, p: Pos) -> bool {
        p.row >= 0 && p.col >= 0 && (p.row as usize) < self.height && (p.col as usize) < self.width
    }

    pub fn index(&self, p: Pos) -> usize {
        p.row as usize * self.width + p.col as usize
    }

    pub fn pos_of(&self, index: usize) -> Pos {
        Pos::new((index / self.width) as i32, (index % self.width) as i32)
    }

    pub fn tile(&self, p: Pos) -> Option<TileKind> {
        self.in_bounds(p).then(|| self.tiles[self.index(p)])
    }

    pub fn is_walkable(&self, p: Pos) -> bool {
        self.tile(p) == Some(TileKind::Floor)
    }

    pub fn cells(&self, kind: TileKind) -> &[Pos] {
        &self.by_kind[kind_slot(kind)]
    }

    pub fn pots(&self) -> &[Pos] {
        self.cells(TileKind::Pot)
    }

    pub fn counters(&self) -> &[Pos] {
        self.cells(TileKind::Counter)
    }

    /// Largest possible walking distance bound used for clipping, `width + height`.
    pub fn diameter(&self) -> u32 {
        (self.width + self.height) as u32
    }

    pub fn to_ascii(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for r in 0..self.height {
            for c in 0..self.width {
                let p = Pos::new(r as i32, c as i32);
                let ch = match self.starts.iter().position(|&s| s == p) {
                    Some(0) => '1',
                    Some(_) => '2',
                    None => self.tiles[self.index(p)].symbol(),
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }

    /// BFS walking distances from `from` over floor cells, with `blocked`
    /// treated as an obstacle. Indexed by [`Layout::index`].
    pub fn distances_from(&self, from: Pos, blocked: Option<Pos>) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.width * self.height];
        if !self.is_walkable(from) {
            return dist;
        }
        dist[self.index(from)] = Some(0);
        let mut queue = VecDeque::from([from]);
        while let Some(p) = queue.pop_front() {
            let d = dist[self.index(p)].unwrap_or(0);
            for dir in Direction::ALL {
                let q = p.offset(dir);
                if self.is_walkable(q) && Some(q) != blocked && dist[self.index(q)].is_none() {
                    dist[self.index(q)] = Some(d + 1);
                    queue.push_back(q);
                }
            }
        }
        dist
    }

    /// Fewest moves from `from` to any floor cell adjacent to one of `targets`.
    pub fn distance_to_any(&self, from: Pos, blocked: Option<Pos>, targets: &[Pos]) -> Option<u32> {
        let dist = self.distances_from(from, blocked);
        self.nearest_adjacent(&dist, targets)
    }

    pub(crate) fn nearest_adjacent(&self, dist: &[Option<u32>], targets: &[Pos]) -> Option<u32> {
        targets
            .iter()
            .flat_map(|&t| Direction::ALL.map(|d| t.offset(d)))
            .filter(|&n| self.in_bounds(n))
            .filter_map(|n| dist[self.index(n)])
            .min()
    }

    fn region_kinds(&self, start: Pos) -> Vec<TileKind> {
        let dist = self.distances_from(start, None);
        let mut kinds: Vec<TileKind> = TileKind::ALL
            .into_iter()
            .filter(|&k| k != TileKind::Floor && k != TileKind::Counter)
            .filter(|&k| self.nearest_adjacent(&dist, self.cells(k)).is_some())
            .collect();
        kinds.sort_by_key(|k| *k as usize);
        kinds
    }

    /// Every feature tile (dispenser, pot, window) touches a floor cell
    /// reachable from some start.
    fn features_reachable(&self) -> bool {
        let reach: Vec<Vec<Option<u32>>> =
            self.starts.iter().map(|&s| self.distances_from(s, None)).collect();
        [
            TileKind::OnionDispenser,
            TileKind::DishDispenser,
            TileKind::Pot,
            TileKind::ServingWindow,
        ]
        .into_iter()
        .flat_map(|k| self.cells(k).iter().copied())
        .all(|t| reach.iter().any(|d| self.nearest_adjacent(d, &[t]).is_some()))
    }
}

/// Exchange the tiles at `a` and `b`. The result must still be a valid layout,
/// keep every feature tile reachable, and leave each start with access to the
/// same set of feature kinds as before.
pub fn swap_tiles(layout: &Layout, a: Pos, b: Pos) -> Result<Layout, KitchenError> {
    let invalid = |m: String| Err(KitchenError::InvalidSwap(m));
    if a == b {
        return invalid(format!("cells coincide at {a}"));
    }
    if !layout.in_bounds(a) || !layout.in_bounds(b) {
        return invalid(format!("{a} or {b} out of bounds"));
    }
    if layout.starts.contains(&a) || layout.starts.contains(&b) {
        return invalid("cannot swap a player start cell".into());
    }
    let mut tiles = layout.tiles.clone();
    tiles.swap(layout.index(a), layout.index(b));
    let swapped = Layout::from_parts(
        layout.name.clone(),
        layout.width,
        layout.height,
        tiles,
        layout.starts,
        layout.rules,
    )
    .map_err(|e| KitchenError::InvalidSwap(e.to_string()))?;
    if !swapped.features_reachable() {
        return invalid("a feature tile is no longer reachable".into());
    }
    for s in layout.starts {
        if swapped.region_kinds(s) != layout.region_kinds(s) {
            return invalid(format!("features accessible from start {s} changed"));
        }
    }
    Ok(swapped)
}

pub const CANONICAL_LAYOUT_NAMES: [&str; 5] = [
    "asymmetric_advantages",
    "coordination_ring",
    "counter_circuit",
    "cramped_room",
    "forced_coordination",
];

fn canonical_source(name: &str) -> Option<(&'static str, &'static str)> {
    Some(match name {
        "asymmetric_advantages" => (
            include_str!("../../layouts/asymmetric_advantages.layout"),
            include_str!("../../layouts/asymmetric_advantages.meta.json"),
        ),
        "coordination_ring" => (
            include_str!("../../layouts/coordination_ring.layout"),
            include_str!("../../layouts/coordination_ring.meta.json"),
        ),
        "counter_circuit" => (
            include_str!("../../layouts/counter_circuit.layout"),
            include_str!("../../layouts/counter_circuit.meta.json"),
        ),
        "cramped_room" => (
            include_str!("../../layouts/cramped_room.layout"),
            include_str!("../../layouts/cramped_room.meta.json"),
        ),
        "forced_coordination" => (
            include_str!("../../layouts/forced_coordination.layout"),
            include_str!("../../layouts/forced_coordination.meta.json"),
        ),
        _ => return None,
    })
}

fn canonical_meta(name: &str) -> Result<(Layout, LayoutMeta), KitchenError> {
    let (grid, meta) =
        canonical_source(name).ok_or_else(|| KitchenError::UnknownLayout(name.to_owned()))?;
    let meta: LayoutMeta =
        serde_json::from_str(meta).map_err(|e| KitchenError::MalformedGrid(e.to_string()))?;
    Ok((Layout::parse(name, grid)?, meta))
}

/// One of the five bundled layouts, by name.
pub fn canonical_layout(name: &str) -> Result<Layout, KitchenError> {
    canonical_meta(name).map(|(l, _)| l)
}

pub fn canonical_layouts() -> Vec<Layout> {
    CANONICAL_LAYOUT_NAMES
        .iter()
        .map(|n| canonical_layout(n).expect("bundled layouts are valid"))
        .collect()
}

/// The modified variant of a bundled layout, named `~<name>`, built from the
/// swap recorded in its sidecar manifest.
pub fn perturbed_layout(name: &str) -> Result<Layout, KitchenError> {
    let (layout, meta) = canonical_meta(name)?;
    let m = meta
        .perturbation
        .ok_or_else(|| KitchenError::InvalidSwap(format!("{name} has no perturbation manifest")))?;
    Ok(swap_tiles(&layout, m.a, m.b)?.with_name(format!("~{name}")))
}
