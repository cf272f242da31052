//! Rectangular tile domains and the strands drawn on them.
//!
//! Tiles are unit squares `[x, x+1] × [y, y+1]`. Spins sit on the corners
//! with `x + y` even, dual sites on the odd corners. Each tile carries two
//! quarter arcs joining midpoints of its sides, either around its SW and NE
//! corners or around its SE and NW corners. Local directions are
//! `0 = E, 1 = N, 2 = W, 3 = S`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TileState {
    /// Arcs around the SW and NE corners: S–W and N–E joined.
    SwNe,
    /// Arcs around the SE and NW corners: S–E and N–W joined.
    SeNw,
}

impl TileState {
    pub fn flipped(self) -> Self {
        match self {
            TileState::SwNe => TileState::SeNw,
            TileState::SeNw => TileState::SwNe,
        }
    }

    #[inline]
    fn partner(self, d: u8) -> u8 {
        match self {
            TileState::SwNe => d ^ 1,
            TileState::SeNw => 3 - d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LoopBoundary {
    /// Boundary arcs wrap the spin corners.
    Free,
    /// Boundary arcs wrap the dual corners.
    Wired,
    /// Boundary sides `a` and `b` (positions in counter-clockwise order
    /// from the bottom-left corner) stay open; the rest pair up.
    Chordal { a: usize, b: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Link {
    Pair(u32),
    Terminal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Into_ {
    Tile(u32),
    Outside,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileDomain {
    pub width: usize,
    pub height: usize,
    pub boundary: LoopBoundary,
    /// `[below, above]` for horizontal sides, `[left, right]` for vertical.
    side_tiles: Vec<[u32; 2]>,
    tile_sides: Vec<[u32; 4]>,
    boundary_sides: Vec<u32>,
    boundary_pos: Vec<u32>,
    links: Vec<Link>,
}

/// One visit of a strand to a side, with the winding accumulated so far
/// in quarter turns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Visit {
    pub side: u32,
    pub winding: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LoopCounts {
    /// Closed loops.
    pub b: usize,
    /// Tiles whose spin diagonal is cut.
    pub c: usize,
    /// Tiles whose spin diagonal is preserved.
    pub d: usize,
}

impl TileDomain {
    pub fn new(width: usize, height: usize, boundary: LoopBoundary) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidTileDomain("empty rectangle".into()));
        }
        if width * height > (u32::MAX / 4) as usize {
            return Err(Error::InvalidTileDomain("rectangle too large".into()));
        }
        let (w, h) = (width, height);
        let n_h = w * (h + 1);
        let n_sides = n_h + (w + 1) * h;
        let hs = |x: usize, y: usize| (y * w + x) as u32;
        let vs = |x: usize, y: usize| (n_h + y * (w + 1) + x) as u32;

        let mut side_tiles = vec![[NONE; 2]; n_sides];
        let mut tile_sides = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let t = (y * w + x) as u32;
                let s = [vs(x + 1, y), hs(x, y + 1), vs(x, y), hs(x, y)];
                side_tiles[s[0] as usize][0] = t;
                side_tiles[s[1] as usize][0] = t;
                side_tiles[s[2] as usize][1] = t;
                side_tiles[s[3] as usize][1] = t;
                tile_sides.push(s);
            }
        }

        let mut boundary_sides = Vec::with_capacity(2 * (w + h));
        boundary_sides.extend((0..w).map(|x| hs(x, 0)));
        boundary_sides.extend((0..h).map(|y| vs(w, y)));
        boundary_sides.extend((0..w).rev().map(|x| hs(x, h)));
        boundary_sides.extend((0..h).rev().map(|y| vs(0, y)));
        let p = boundary_sides.len();
        let mut boundary_pos = vec![NONE; n_sides];
        for (i, &s) in boundary_sides.iter().enumerate() {
            boundary_pos[s as usize] = i as u32;
        }

        // corner v_i sits between positions i-1 and i and has parity i mod 2
        let mut links = vec![Link::Terminal; p];
        let mut pair_around = |i: usize| {
            let (l, r) = ((i + p - 1) % p, i % p);
            links[l] = Link::Pair(r as u32);
            links[r] = Link::Pair(l as u32);
        };
        match boundary {
            LoopBoundary::Free => (0..p).step_by(2).for_each(&mut pair_around),
            LoopBoundary::Wired => (1..p).step_by(2).for_each(&mut pair_around),
            LoopBoundary::Chordal { a, b } => {
                if a >= p || b >= p || a == b {
                    return Err(Error::InvalidTileDomain(format!(
                        "marks {a}, {b} not distinct boundary positions < {p}"
                    )));
                }
                if (b + p - a) % 2 == 0 {
                    return Err(Error::InvalidTileDomain(
                        "marks must be an odd number of positions apart".into(),
                    ));
                }
                for (from, to) in [(a, b), (b, a)] {
                    let mut i = from + 2;
                    while (i + p - from) % p < (to + p - from) % p + 1 {
                        pair_around(i % p);
                        i += 2;
                    }
                }
            }
        }
        Ok(TileDomain {
            width,
            height,
            boundary,
            side_tiles,
            tile_sides,
            boundary_sides,
            boundary_pos,
            links,
        })
    }

    /// Chordal domain with `a` on the bottom side and `b` on the top side,
    /// both as close to the vertical midline as the parity rule allows.
    pub fn chordal_rect(width: usize, height: usize) -> Result<Self> {
        let (w, h) = (width, height);
        if w == 0 || h == 0 {
            return Err(Error::InvalidTileDomain("empty rectangle".into()));
        }
        let a = w / 2;
        let top = |x: usize| w + h + (w - 1 - x);
        let xb = [a, a.wrapping_sub(1), a + 1]
            .into_iter()
            .find(|&x| x < w && (top(x) - a) % 2 == 1)
            .ok_or_else(|| Error::InvalidTileDomain("no admissible top mark".into()))?;
        TileDomain::new(w, h, LoopBoundary::Chordal { a, b: top(xb) })
    }

    /// Tiles from text rows listed top row first, `/` for [`TileState::SwNe`]
    /// and `\` for [`TileState::SeNw`].
    pub fn parse_tiles<S: AsRef<str>>(&self, rows_top_down: &[S]) -> Result<Vec<TileState>> {
        if rows_top_down.len() != self.height {
            return Err(Error::InvalidTileDomain(format!(
                "expected {} rows, got {}",
                self.height,
                rows_top_down.len()
            )));
        }
        let mut tiles = vec![TileState::SwNe; self.n_tiles()];
        for (r, row) in rows_top_down.iter().enumerate() {
            let y = self.height - 1 - r;
            let row = row.as_ref();
            if row.chars().count() != self.width {
                return Err(Error::InvalidTileDomain(format!(
                    "row {r} is not {} tiles wide",
                    self.width
                )));
            }
            for (x, ch) in row.chars().enumerate() {
                tiles[y * self.width + x] = match ch {
                    '/' => TileState::SwNe,
                    '\\' => TileState::SeNw,
                    _ => return Err(Error::InvalidTileDomain(format!("bad tile character {ch:?}"))),
                };
            }
        }
        Ok(tiles)
    }

    /// Side whose midpoint is `(x, y)`.
    pub fn side_at(&self, x: f64, y: f64) -> Option<u32> {
        (0..self.n_sides())
            .find(|&s| {
                let (sx, sy) = self.side_midpoint(s);
                (sx - x).abs() < 1e-9 && (sy - y).abs() < 1e-9
            })
            .map(|s| s as u32)
    }

    pub fn n_tiles(&self) -> usize {
        self.tile_sides.len()
    }

    pub fn n_sides(&self) -> usize {
        self.side_tiles.len()
    }

    pub fn tile_xy(&self, t: usize) -> (usize, usize) {
        (t % self.width, t / self.width)
    }

    pub fn tile_sides(&self, t: usize) -> [u32; 4] {
        self.tile_sides[t]
    }

    pub fn boundary_sides(&self) -> &[u32] {
        &self.boundary_sides
    }

    pub fn is_boundary_side(&self, s: usize) -> bool {
        self.boundary_pos[s] != NONE
    }

    /// Midpoint of side `s` in tile units.
    pub fn side_midpoint(&self, s: usize) -> (f64, f64) {
        let n_h = self.width * (self.height + 1);
        if s < n_h {
            ((s % self.width) as f64 + 0.5, (s / self.width) as f64)
        } else {
            let k = s - n_h;
            ((k % (self.width + 1)) as f64, (k / (self.width + 1)) as f64 + 0.5)
        }
    }

    pub fn is_horizontal(&self, s: usize) -> bool {
        s < self.width * (self.height + 1)
    }

    /// The four sides diagonally adjacent to `s` as `[NE, NW, SW, SE]`,
    /// when all exist.
    pub fn side_stencil(&self, s: usize) -> Option<[u32; 4]> {
        let [t0, t1] = self.side_tiles[s];
        if t0 == NONE || t1 == NONE {
            return None;
        }
        let (a, b) = (self.tile_sides[t0 as usize], self.tile_sides[t1 as usize]);
        Some(if self.is_horizontal(s) {
            // t0 below, t1 above
            [b[0], b[2], a[2], a[0]]
        } else {
            // t0 left, t1 right
            [b[1], a[1], a[3], b[3]]
        })
    }

    /// Whether the spin diagonal of tile `t` is cut in state `st`.
    pub fn is_cut(&self, t: usize, st: TileState) -> bool {
        let (x, y) = self.tile_xy(t);
        (st == TileState::SwNe) == ((x + y) % 2 == 0)
    }

    pub fn state_for(&self, t: usize, cut: bool) -> TileState {
        let (x, y) = self.tile_xy(t);
        if cut == ((x + y) % 2 == 0) {
            TileState::SwNe
        } else {
            TileState::SeNw
        }
    }

    fn local_dir(&self, t: u32, s: u32) -> u8 {
        self.tile_sides[t as usize]
            .iter()
            .position(|&x| x == s)
            .expect("side of tile") as u8
    }

    fn boundary_tile(&self, s: u32) -> u32 {
        let [a, b] = self.side_tiles[s as usize];
        if a == NONE {
            b
        } else {
            a
        }
    }

    /// Advances a strand standing on side `s` and heading into `into`.
    /// Returns the next side, where it heads next, and the turn in quarter
    /// turns; `None` at a terminal.
    #[inline]
    pub fn step(&self, tiles: &[TileState], s: u32, into: Into_) -> Option<(u32, Into_, i32)> {
        match into {
            Into_::Tile(t) => {
                let din = self.local_dir(t, s);
                let dout = tiles[t as usize].partner(din);
                let turn = if (dout + 4 - (din + 2) % 4) % 4 == 1 { 1 } else { -1 };
                let s2 = self.tile_sides[t as usize][dout as usize];
                let [a, b] = self.side_tiles[s2 as usize];
                let other = if a == t { b } else { a };
                let next = if other == NONE {
                    Into_::Outside
                } else {
                    Into_::Tile(other)
                };
                Some((s2, next, turn))
            }
            Into_::Outside => {
                let i = self.boundary_pos[s as usize] as usize;
                let Link::Pair(j) = self.links[i] else {
                    return None;
                };
                let s2 = self.boundary_sides[j as usize];
                let t2 = self.boundary_tile(s2);
                let p = self.boundary_sides.len();
                let ccw = (i + 1) % p == j as usize;
                let (first, second) = if ccw { (s, s2) } else { (s2, s) };
                let dout = self.local_dir(self.boundary_tile(first), first) as i32;
                let din = (self.local_dir(self.boundary_tile(second), second) as i32 + 2) % 4;
                let mut turn = (din - dout).rem_euclid(4);
                if turn == 0 {
                    turn = 4;
                }
                Some((s2, Into_::Tile(t2), if ccw { turn } else { -turn }))
            }
        }
    }

    fn marks(&self) -> Option<(u32, u32)> {
        match self.boundary {
            LoopBoundary::Chordal { a, b } => Some((self.boundary_sides[a], self.boundary_sides[b])),
            _ => None,
        }
    }

    /// Walks the chordal trajectory from `b` to `a`, recording each side
    /// with the winding from `b`.
    pub fn trajectory_from_b(&self, tiles: &[TileState]) -> Result<Vec<Visit>> {
        let (sa, sb) = self.marks().ok_or(Error::BrokenTrajectory)?;
        let mut out = vec![Visit { side: sb, winding: 0 }];
        let (mut s, mut into, mut w) = (sb, Into_::Tile(self.boundary_tile(sb)), 0);
        let limit = self.n_sides() + 1;
        while let Some((s2, next, turn)) = self.step(tiles, s, into) {
            w += turn;
            s = s2;
            into = next;
            out.push(Visit { side: s, winding: w });
            if out.len() > limit {
                return Err(Error::BrokenTrajectory);
            }
        }
        if s != sa {
            return Err(Error::BrokenTrajectory);
        }
        Ok(out)
    }

    /// `(b, c, d)` for a full assignment of tile states.
    pub fn counts(&self, tiles: &[TileState]) -> Result<LoopCounts> {
        assert_eq!(tiles.len(), self.n_tiles());
        let mut seen = vec![false; self.n_sides()];
        if self.marks().is_some() {
            for v in self.trajectory_from_b(tiles)? {
                seen[v.side as usize] = true;
            }
        }
        let mut b = 0;
        for s0 in 0..self.n_sides() {
            if seen[s0] {
                continue;
            }
            b += 1;
            let [t0, _] = self.side_tiles[s0];
            let mut into = if t0 == NONE { Into_::Outside } else { Into_::Tile(t0) };
            let mut s = s0 as u32;
            loop {
                seen[s as usize] = true;
                let (s2, next, _) = self.step(tiles, s, into).ok_or(Error::BrokenTrajectory)?;
                s = s2;
                into = next;
                if s as usize == s0 {
                    break;
                }
            }
        }
        let c = (0..self.n_tiles()).filter(|&t| self.is_cut(t, tiles[t])).count();
        Ok(LoopCounts {
            b,
            c,
            d: self.n_tiles() - c,
        })
    }

    /// Change in the number of closed loops if tile `t` is flipped.
    pub fn flip_delta(&self, tiles: &[TileState], t: usize) -> i32 {
        // outer[d] = local direction reached by leaving through side d and
        // following the strand back to this tile, or 4 for a terminal
        let sides = self.tile_sides[t];
        let mut outer = [u8::MAX; 4];
        for d in 0..4u8 {
            if outer[d as usize] != u8::MAX {
                continue;
            }
            let s0 = sides[d as usize];
            let [a, b] = self.side_tiles[s0 as usize];
            let other = if a == t as u32 { b } else { a };
            let mut into = if other == NONE {
                Into_::Outside
            } else {
                Into_::Tile(other)
            };
            let mut s = s0;
            let end = loop {
                match self.step(tiles, s, into) {
                    None => break 4,
                    Some((s2, next, _)) => {
                        if next == Into_::Tile(t as u32) {
                            break self.local_dir(t as u32, s2);
                        }
                        s = s2;
                        into = next;
                    }
                }
            };
            outer[d as usize] = end;
            if end < 4 {
                outer[end as usize] = d;
            }
        }
        let closed = |st: TileState| -> i32 {
            // count cycles in the graph on the four local ends
            let mut seen = [false; 4];
            let mut cycles = 0;
            for d0 in 0..4u8 {
                if seen[d0 as usize] {
                    continue;
                }
                let mut d = d0;
                let mut open = false;
                // walk both directions from d0 until a terminal or closure
                loop {
                    seen[d as usize] = true;
                    let inner = st.partner(d);
                    seen[inner as usize] = true;
                    let o = outer[inner as usize];
                    if o == 4 {
                        open = true;
                        break;
                    }
                    if o == d0 {
                        break;
                    }
                    d = o;
                }
                if open {
                    // sweep the other way so the component is fully marked
                    let mut d = d0;
                    while outer[d as usize] != 4 {
                        let o = outer[d as usize];
                        seen[o as usize] = true;
                        let inner = st.partner(o);
                        seen[inner as usize] = true;
                        d = inner;
                        if d == d0 {
                            break;
                        }
                    }
                } else {
                    cycles += 1;
                }
            }
            cycles
        };
        let st = tiles[t];
        closed(st.flipped()) - closed(st)
    }

    /// Spin corners as `(x, y)`, in the index order used by
    /// [`TileDomain::spin_of_corner`].
    pub fn spin_corners(&self) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        for y in 0..=self.height {
            for x in 0..=self.width {
                if (x + y) % 2 == 0 {
                    v.push((x, y));
                }
            }
        }
        v
    }

    pub fn spin_of_corner(&self, x: usize, y: usize) -> usize {
        debug_assert!((x + y).is_multiple_of(2));
        (y * (self.width + 1) + x) / 2
    }

    /// The two spin corners joined by the diagonal of tile `t`.
    pub fn tile_spins(&self, t: usize) -> (usize, usize) {
        let (x, y) = self.tile_xy(t);
        if (x + y) % 2 == 0 {
            (self.spin_of_corner(x, y), self.spin_of_corner(x + 1, y + 1))
        } else {
            (self.spin_of_corner(x + 1, y), self.spin_of_corner(x, y + 1))
        }
    }

    /// Spin corners joined through the boundary: every boundary spin for
    /// wired arcs, the spin corners of the dual-wrapping arc for chordal
    /// marks, none for free arcs.
    pub fn wired_spins(&self) -> Vec<usize> {
        let p = self.boundary_sides.len();
        let corner = |i: usize| -> (usize, usize) {
            let (w, h) = (self.width, self.height);
            let i = i % p;
            if i <= w {
                (i, 0)
            } else if i <= w + h {
                (w, i - w)
            } else if i <= 2 * w + h {
                (2 * w + h - i, h)
            } else {
                (0, p - i)
            }
        };
        let mut out: Vec<usize> = match self.boundary {
            LoopBoundary::Free => vec![],
            LoopBoundary::Wired => (0..p)
                .step_by(2)
                .map(|i| {
                    let (x, y) = corner(i);
                    self.spin_of_corner(x, y)
                })
                .collect(),
            LoopBoundary::Chordal { a, b } => {
                // the arc whose pairing corners are odd wraps dual sites
                let (from, to) = if (a + 2) % 2 == 1 { (a, b) } else { (b, a) };
                let mut v = Vec::new();
                let mut i = from + 1;
                while (i + p - from) % p <= (to + p - from) % p {
                    if i % 2 == 0 {
                        let (x, y) = corner(i);
                        v.push(self.spin_of_corner(x, y));
                    }
                    i += 1;
                }
                v
            }
        };
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_configs(n: usize) -> impl Iterator<Item = Vec<TileState>> {
        (0..1u32 << n).map(move |m| {
            (0..n)
                .map(|i| {
                    if m >> i & 1 == 1 {
                        TileState::SeNw
                    } else {
                        TileState::SwNe
                    }
                })
                .collect()
        })
    }

    #[test]
    fn single_tile_loops() {
        let free = TileDomain::new(1, 1, LoopBoundary::Free).unwrap();
        // cut: arcs around both spins, each closed by the free boundary
        let c = free.counts(&[TileState::SwNe]).unwrap();
        assert_eq!((c.b, c.c, c.d), (2, 1, 0));
        let c = free.counts(&[TileState::SeNw]).unwrap();
        assert_eq!((c.b, c.c, c.d), (1, 0, 1));
    }

    #[test]
    fn chordal_trajectory_runs_from_b_to_a() {
        for (w, h) in [(1, 2), (2, 2), (3, 2), (2, 4), (4, 4)] {
            let dom = TileDomain::chordal_rect(w, h).unwrap();
            for cfg in all_configs(w * h).take(256) {
                let path = dom.trajectory_from_b(&cfg).unwrap();
                assert!(path.len() >= 2);
                dom.counts(&cfg).unwrap();
            }
        }
    }

    #[test]
    fn flip_delta_matches_recount() {
        for dom in [
            TileDomain::new(2, 3, LoopBoundary::Free).unwrap(),
            TileDomain::new(3, 2, LoopBoundary::Wired).unwrap(),
            TileDomain::chordal_rect(3, 3).unwrap(),
        ] {
            for cfg in all_configs(dom.n_tiles()) {
                let b0 = dom.counts(&cfg).unwrap().b as i32;
                for t in 0..dom.n_tiles() {
                    let mut g = cfg.clone();
                    g[t] = g[t].flipped();
                    let b1 = dom.counts(&g).unwrap().b as i32;
                    assert_eq!(dom.flip_delta(&cfg, t), b1 - b0);
                }
            }
        }
    }

    #[test]
    fn parses_text_rows() {
        let dom = TileDomain::new(2, 2, LoopBoundary::Free).unwrap();
        let t = dom.parse_tiles(&["/\\", "\\/"]).unwrap();
        assert_eq!(
            t,
            vec![TileState::SeNw, TileState::SwNe, TileState::SwNe, TileState::SeNw]
        );
        assert!(dom.parse_tiles(&["//"]).is_err());
        assert!(dom.parse_tiles(&["/x", "//"]).is_err());
        assert_eq!(dom.side_at(0.5, 0.0), Some(0));
        assert_eq!(dom.side_at(0.3, 0.0), None);
    }

    #[test]
    fn rejects_bad_marks() {
        assert!(TileDomain::new(2, 2, LoopBoundary::Chordal { a: 0, b: 2 }).is_err());
        assert!(TileDomain::new(0, 2, LoopBoundary::Free).is_err());
    }

    #[test]
    fn closed_strand_winding_is_a_full_turn() {
        let dom = TileDomain::new(3, 2, LoopBoundary::Wired).unwrap();
        for cfg in all_configs(6) {
            let mut seen = vec![false; dom.n_sides()];
            for s0 in 0..dom.n_sides() {
                if seen[s0] {
                    continue;
                }
                let [t0, _] = dom.side_tiles[s0];
                let mut into = if t0 == NONE { Into_::Outside } else { Into_::Tile(t0) };
                let (mut s, mut w) = (s0 as u32, 0);
                loop {
                    seen[s as usize] = true;
                    let (s2, next, turn) = dom.step(&cfg, s, into).unwrap();
                    w += turn;
                    s = s2;
                    into = next;
                    if s as usize == s0 {
                        break;
                    }
                }
                assert_eq!(w.abs(), 4, "a simple closed loop winds once");
            }
        }
    }
}
