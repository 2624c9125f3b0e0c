use super::{Direction, GameState, Layout, Object, Pos, TileKind};

fn object_char(o: Object) -> char {
    match o {
        Object::Onion => 'o',
        Object::Dish => 'd',
        Object::Soup => 's',
    }
}

/// Plain-text board: players as arrows (`^ v < >`) followed by what they
/// hold, counters show their object in lower case, pots show the onion count
/// and a `*` once ready.
pub fn render_text(state: &GameState, layout: &Layout) -> String {
    let mut out = format!("tick {} score {}\n", state.tick, state.score);
    for r in 0..layout.height() {
        for c in 0..layout.width() {
            let p = Pos::new(r as i32, c as i32);
            let cell: String = if let Some(i) = state.player_at(p) {
                let pl = &state.players[i];
                let arrow = match pl.orientation {
                    Direction::Up => '^',
                    Direction::Down => 'v',
                    Direction::Left => '<',
                    Direction::Right => '>',
                };
                let held = pl.held.map(object_char).unwrap_or(char::from(b'1' + i as u8));
                [arrow, held].iter().collect()
            } else {
                match layout.tile(p).unwrap_or(TileKind::Counter) {
                    TileKind::Counter => match state.counter_object(p) {
                        Some(o) => format!("X{}", object_char(o)),
                        None => "X ".into(),
                    },
                    TileKind::Pot => {
                        let pot = state.pot(p).copied().unwrap_or_default();
                        let flag = if pot.is_ready() { '*' } else { char::from(b'0' + pot.onions) };
                        format!("P{flag}")
                    }
                    k => format!("{} ", k.symbol()),
                }
            };
            out.push_str(&cell);
        }
        out.push('\n');
    }
    out
}
