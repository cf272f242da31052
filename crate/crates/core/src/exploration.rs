//! The percolation exploration path on hexagon cells.
//!
//! Cells are triangular-lattice sites in odd-row offset coordinates
//! `(i, j)`, centred at `(i + (j mod 2)/2, j·√3/2)`. The path runs along
//! hexagon edges with a closed cell `L` on its left and an open cell `R`
//! on its right, revealing the cell in front of it.

use std::collections::HashMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::conformal::{ConformalMap, RectToHalfPlane};
use crate::crossing::{DiscreteTriplet, Exterior};
use crate::lattice::{Configuration, LatticeKind, Mode, PercolationModel, SiteKey};
use crate::loewner::{extract_driving, DrivingFunction};
use crate::{Error, Result};

const S3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub i: i64,
    pub j: i64,
}

impl Cell {
    pub const fn new(i: i64, j: i64) -> Self {
        Cell { i, j }
    }

    pub fn center(self) -> [f64; 2] {
        [self.i as f64 + 0.5 * (self.j & 1) as f64, self.j as f64 * S3 / 2.0]
    }

    /// Triangular-lattice site of this cell (unit mesh).
    pub fn site(self) -> SiteKey {
        SiteKey {
            m: self.i - (self.j - (self.j & 1)) / 2,
            n: self.j,
            s: 0,
        }
    }

    pub fn from_site(k: SiteKey) -> Self {
        Cell {
            i: k.m + (k.n - (k.n & 1)) / 2,
            j: k.n,
        }
    }

    pub fn neighbors(self) -> [Cell; 6] {
        let (i, j) = (self.i, self.j);
        let o = j & 1;
        [
            Cell::new(i + 1, j),
            Cell::new(i - 1, j),
            Cell::new(i - 1 + o, j + 1),
            Cell::new(i + o, j + 1),
            Cell::new(i - 1 + o, j - 1),
            Cell::new(i + o, j - 1),
        ]
    }

    pub fn is_adjacent(self, other: Cell) -> bool {
        self.neighbors().contains(&other)
    }
}

/// Which boundary rule the exploration uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    /// Start at the top-left corner `A`; the left side `AB` is open, the
    /// top side `AD` closed; stop on reaching `BC` (bottom) or `CD` (right).
    Corner,
    /// Start at the bottom midpoint `a`, end at the top midpoint `b`; the
    /// boundary arc from `a` to `b` through the left side is closed, the
    /// other one open.
    Chordal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCause {
    HitCd,
    HitBc,
    Exhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Turn {
    L,
    R,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellState {
    Open,
    Closed,
    Unknown,
}

enum Outside {
    Inside,
    Open,
    Closed,
    Stop(StopCause),
}

/// A `cols × rows` block of cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HexDomain {
    pub cols: i64,
    pub rows: i64,
    pub bc: BoundaryCondition,
}

impl HexDomain {
    pub fn new(cols: i64, rows: i64, bc: BoundaryCondition) -> Result<Self> {
        let min = if bc == BoundaryCondition::Chordal { 3 } else { 1 };
        if cols < min || rows < 1 {
            return Err(Error::InvalidArgument(format!("domain {cols}x{rows} too small")));
        }
        Ok(HexDomain { cols, rows, bc })
    }

    /// Domain with `cols` columns and the number of rows closest to an
    /// aspect ratio (height / width) of `r`.
    pub fn with_aspect(cols: i64, r: f64, bc: BoundaryCondition) -> Result<Self> {
        let rows = (r * cols as f64 * 2.0 / S3).round().max(1.0) as i64;
        HexDomain::new(cols, rows, bc)
    }

    pub fn contains(&self, c: Cell) -> bool {
        (0..self.cols).contains(&c.i) && (0..self.rows).contains(&c.j)
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.rows).flat_map(move |j| (0..self.cols).map(move |i| Cell::new(i, j)))
    }

    pub fn len(&self) -> usize {
        (self.cols * self.rows) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Column left of the start point `a` in chordal mode.
    fn a_col(&self) -> i64 {
        self.cols / 2 - 1
    }

    /// x-coordinate of both marked points in chordal mode.
    pub fn x_mark(&self) -> f64 {
        // midpoint of cells (a_col, −1) and (a_col + 1, −1); row −1 is odd
        self.a_col() as f64 + 1.0
    }

    fn classify(&self, c: Cell) -> Outside {
        if self.contains(c) {
            return Outside::Inside;
        }
        match self.bc {
            BoundaryCondition::Corner => {
                if c.j < 0 {
                    Outside::Stop(StopCause::HitBc)
                } else if c.i >= self.cols {
                    Outside::Stop(StopCause::HitCd)
                } else if c.j >= self.rows {
                    Outside::Closed
                } else {
                    Outside::Open
                }
            }
            BoundaryCondition::Chordal => {
                let x = c.center()[0];
                let open = if c.j < 0 {
                    x > self.x_mark()
                } else if c.j >= self.rows {
                    x >= self.x_mark()
                } else {
                    c.i >= self.cols
                };
                if open {
                    Outside::Open
                } else {
                    Outside::Closed
                }
            }
        }
    }

    /// Colour of a cell outside the domain in chordal mode: `Some(true)` on
    /// the open arc, `Some(false)` on the closed arc, `None` inside.
    pub fn boundary_color(&self, c: Cell) -> Option<bool> {
        match self.classify(c) {
            Outside::Inside => None,
            Outside::Open => Some(true),
            Outside::Closed | Outside::Stop(_) => Some(false),
        }
    }

    fn start(&self) -> (Cell, Cell) {
        match self.bc {
            BoundaryCondition::Corner => {
                let r = Cell::new(-1, self.rows - 1);
                let l = r
                    .neighbors()
                    .into_iter()
                    .filter(|n| n.j == self.rows)
                    .find(|&l| self.contains(front(l, r)))
                    .expect("corner start exists");
                (l, r)
            }
            BoundaryCondition::Chordal => (Cell::new(self.a_col(), -1), Cell::new(self.a_col() + 1, -1)),
        }
    }

    /// The continuum rectangle `[x0, x0 + cols] × [y0, y0 + rows·√3/2]`
    /// the cells tile; `x0` puts the chordal marks on the vertical midline.
    pub fn rectangle(&self) -> ([f64; 2], f64, f64) {
        let w = self.cols as f64;
        let h = self.rows as f64 * S3 / 2.0;
        let x0 = match self.bc {
            BoundaryCondition::Corner => -0.25,
            BoundaryCondition::Chordal => self.x_mark() - w / 2.0,
        };
        ([x0, -S3 / 4.0], w, h)
    }

    /// Site-mode triplet for the same crossing event: left-side cells
    /// pinned open as `I`, right-side cells pinned open as `J`, top and
    /// bottom pinned closed.
    pub fn discrete_triplet(&self, model: &PercolationModel) -> Result<DiscreteTriplet> {
        if model.graph.kind != LatticeKind::Triangular || model.mode != Mode::Site {
            return Err(Error::InvalidArgument(
                "exploration needs triangular site percolation".into(),
            ));
        }
        if self.bc != BoundaryCondition::Corner {
            return Err(Error::InvalidArgument("crossing triplets use the corner rule".into()));
        }
        let dom = *self;
        DiscreteTriplet::from_sites(
            model,
            format!("hex-{}x{}", self.cols, self.rows),
            self.cells().map(Cell::site),
            move |k| {
                let c = Cell::from_site(k);
                match dom.classify(c) {
                    Outside::Stop(StopCause::HitCd) => Exterior::ArcJ,
                    Outside::Open => Exterior::ArcI,
                    _ => Exterior::Closed,
                }
            },
        )
    }
}

/// The cell ahead when walking with `l` on the left and `r` on the right.
pub fn front(l: Cell, r: Cell) -> Cell {
    let (pl, pr) = (l.center(), r.center());
    let d = [pr[0] - pl[0], pr[1] - pl[1]];
    l.neighbors()
        .into_iter()
        .filter(|x| r.is_adjacent(*x))
        .find(|x| {
            let p = x.center();
            d[0] * (p[1] - pl[1]) - d[1] * (p[0] - pl[0]) > 0.0
        })
        .expect("adjacent cells share two neighbours")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationPath {
    /// Midpoints of the hexagon edges crossed, from the start.
    pub vertices: Vec<[f64; 2]>,
    /// `(left, right)` cells of each vertex.
    pub pairs: Vec<(Cell, Cell)>,
    /// Turn taken into each vertex after the first.
    pub turns: Vec<Turn>,
    /// Revealed interior cells in reveal order.
    pub revealed: Vec<(Cell, bool)>,
    pub stop_cause: StopCause,
    index: HashMap<Cell, bool>,
}

impl ExplorationPath {
    pub fn state(&self, c: Cell) -> CellState {
        match self.index.get(&c) {
            Some(true) => CellState::Open,
            Some(false) => CellState::Closed,
            None => CellState::Unknown,
        }
    }

    /// First revealed value; later queries never change it.
    fn reveal(&mut self, c: Cell, oracle: &mut impl FnMut(Cell) -> bool) -> bool {
        if let Some(&v) = self.index.get(&c) {
            return v;
        }
        let v = oracle(c);
        self.index.insert(c, v);
        self.revealed.push((c, v));
        v
    }

    /// `t_index,x,y,turn` rows; the first vertex has turn `-`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_index,x,y,turn\n");
        for (t, v) in self.vertices.iter().enumerate() {
            let turn = match t {
                0 => "-",
                _ => match self.turns[t - 1] {
                    Turn::L => "L",
                    Turn::R => "R",
                },
            };
            out.push_str(&format!("{t},{},{},{turn}\n", v[0], v[1]));
        }
        out
    }
}

fn midpoint(a: Cell, b: Cell) -> [f64; 2] {
    let (p, q) = (a.center(), b.center());
    [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
}

/// Runs the exploration, asking `oracle` for each interior cell the first
/// time it is in front of the path.
pub fn explore_with(domain: &HexDomain, mut oracle: impl FnMut(Cell) -> bool) -> Result<ExplorationPath> {
    let (mut l, mut r) = domain.start();
    let start = (l, r);
    let mut path = ExplorationPath {
        vertices: vec![midpoint(l, r)],
        pairs: vec![(l, r)],
        turns: Vec::new(),
        revealed: Vec::new(),
        stop_cause: StopCause::Exhausted,
        index: HashMap::new(),
    };
    let limit = 4 * (domain.len() + 2 * (domain.cols + domain.rows) as usize + 8);
    for _ in 0..limit {
        let f = front(l, r);
        let open = match domain.classify(f) {
            Outside::Inside => path.reveal(f, &mut oracle),
            Outside::Open => true,
            Outside::Closed => false,
            Outside::Stop(cause) => {
                // the path ends on the boundary edge it reached
                let last = match cause {
                    StopCause::HitCd => (l, f),
                    _ => (f, r),
                };
                path.turns
                    .push(if cause == StopCause::HitCd { Turn::L } else { Turn::R });
                path.vertices.push(midpoint(last.0, last.1));
                path.pairs.push(last);
                path.stop_cause = cause;
                return Ok(path);
            }
        };
        if open {
            r = f;
            path.turns.push(Turn::L);
        } else {
            l = f;
            path.turns.push(Turn::R);
        }
        path.vertices.push(midpoint(l, r));
        path.pairs.push((l, r));
        if domain.bc == BoundaryCondition::Chordal && !domain.contains(l) && !domain.contains(r) && (l, r) != start {
            path.stop_cause = StopCause::Exhausted;
            return Ok(path);
        }
    }
    Err(Error::InvalidArgument("exploration did not terminate".into()))
}

/// Lazy exploration of the sample with per-sample seed `seed`: each cell is
/// open with probability `p`, using the same per-site uniforms as the
/// crossing estimator.
pub fn explore(domain: &HexDomain, p: f64, seed: u64) -> Result<ExplorationPath> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::ProbabilityOutOfRange {
            class: "cell".into(),
            value: p,
        });
    }
    explore_with(domain, |c| PercolationModel::site_uniform(seed, c.site()) < p)
}

/// Crossing decision read off the exploration of a full configuration on
/// the triplet built by [`HexDomain::discrete_triplet`].
pub fn crossing_by_exploration(config: &Configuration<'_>, dt: &DiscreteTriplet, domain: &HexDomain) -> Result<bool> {
    if domain.bc != BoundaryCondition::Corner {
        return Err(Error::StartNotOnBoundary);
    }
    let path = explore_with(domain, |c| {
        let i = dt.site_index(c.site()).expect("cell instantiated");
        config.status[i]
    })?;
    Ok(path.stop_cause == StopCause::HitCd)
}

/// Image of a path in the upper half-plane. `marks` are the images of the
/// corners `A, B, C, D` (corner rule) or of `a, b` (chordal rule).
#[derive(Debug, Clone, PartialEq)]
pub struct HalfPlaneCurve {
    pub points: Vec<Complex64>,
    pub marks: Vec<Complex64>,
}

/// Maps a path into the upper half-plane through the rectangle the domain
/// tiles. Corner rule: `A ↦ 0`, `C ↦ ∞`. Chordal rule: `a ↦ 0`, `b ↦ ∞`.
pub fn path_to_halfplane(path: &ExplorationPath, domain: &HexDomain) -> Result<HalfPlaneCurve> {
    let ([x0, y0], w, h) = domain.rectangle();
    let r = h / w;
    let map = RectToHalfPlane::new(r)?;
    let to_rect = |p: [f64; 2]| Complex64::new(((p[0] - x0) / w).clamp(0.0, 1.0), ((p[1] - y0) / w).clamp(0.0, r));
    let [ca, cb, cc, cd] = [
        Complex64::new(0.0, r),
        Complex64::new(0.0, 0.0),
        Complex64::new(1.0, 0.0),
        Complex64::new(1.0, r),
    ];
    let mut pts: Vec<Complex64> = Vec::with_capacity(path.vertices.len() + 1);
    match domain.bc {
        BoundaryCondition::Corner => {
            let wa = map.eval(ca)?.re;
            let wc = map.eval(cc)?.re;
            let mob = |w: Complex64| (w - wa) / (wc - w);
            pts.push(Complex64::new(0.0, 0.0));
            let n = path.vertices.len();
            for (t, &v) in path.vertices.iter().enumerate().skip(1) {
                let mut z = to_rect(v);
                if t == n - 1 {
                    match path.stop_cause {
                        StopCause::HitCd => z.re = 1.0,
                        StopCause::HitBc => z.im = 0.0,
                        StopCause::Exhausted => {}
                    }
                }
                let m = mob(map.eval(z)?);
                pts.push(Complex64::new(m.re, m.im.max(0.0)));
            }
            let marks = [ca, cb, cc, cd]
                .iter()
                .map(|&z| Ok(mob(map.eval(z)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(HalfPlaneCurve { points: pts, marks })
        }
        BoundaryCondition::Chordal => {
            pts.push(Complex64::new(0.0, 0.0));
            for &v in &path.vertices[1..] {
                let m = map.eval(to_rect(v))?;
                pts.push(Complex64::new(m.re, m.im.max(0.0)));
            }
            Ok(HalfPlaneCurve {
                points: pts,
                marks: vec![Complex64::new(0.0, 0.0), Complex64::new(f64::INFINITY, 0.0)],
            })
        }
    }
}

/// Driving function of a chordal path mapped to the half-plane, thinned to
/// `n_points` vertices; also returns the number of zipper points skipped.
pub fn path_driving(path: &ExplorationPath, domain: &HexDomain, n_points: usize) -> Result<(DrivingFunction, usize)> {
    if domain.bc != BoundaryCondition::Chordal {
        return Err(Error::InvalidArgument("driving functions need the chordal rule".into()));
    }
    let curve = path_to_halfplane(path, domain)?;
    // the last vertex sits on the edge at b, whose image is at infinity
    let pts: Vec<Complex64> = curve.points.into_iter().filter(|p| p.is_finite()).collect();
    extract_driving(&pts, n_points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::sample_configuration;
    use crate::rng;
    use std::collections::HashSet;

    fn corner(c: i64, r: i64) -> HexDomain {
        HexDomain::new(c, r, BoundaryCondition::Corner).unwrap()
    }

    #[test]
    fn cell_site_round_trip() {
        for j in -3..4 {
            for i in -3..4 {
                let c = Cell::new(i, j);
                assert_eq!(Cell::from_site(c.site()), c);
                let g = crate::lattice::build_graph(LatticeKind::Triangular, 1.0).unwrap();
                let p = g.position(c.site());
                let q = c.center();
                assert!((p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12);
                for n in c.neighbors() {
                    let d = (n.center()[0] - q[0]).hypot(n.center()[1] - q[1]);
                    assert!((d - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn all_open_hugs_the_closed_side() {
        let d = corner(8, 6);
        for path in [explore_with(&d, |_| true).unwrap(), explore(&d, 1.0, 3).unwrap()] {
            assert_eq!(path.stop_cause, StopCause::HitCd);
            // every left cell is outside on the top side
            assert!(path.pairs.iter().all(|(l, _)| l.j >= d.rows));
            assert!(path.revealed.iter().all(|(c, _)| c.j == d.rows - 1));
        }
        let closed = explore_with(&d, |_| false).unwrap();
        assert_eq!(closed.stop_cause, StopCause::HitBc);
        assert!(closed.pairs.iter().all(|(_, r)| r.i < 0));
    }

    fn exhaustive(cols: i64, rows: i64) {
        let d = corner(cols, rows);
        let model = PercolationModel::homogeneous(LatticeKind::Triangular, Mode::Site, 0.5).unwrap();
        let dt = d.discrete_triplet(&model).unwrap();
        let n = d.len();
        let mut c = sample_configuration(&model, &dt.region, 0);
        let mut agree = 0u64;
        for mask in 0u64..1 << n {
            c.status.fill(false);
            for b in 0..n {
                c.status.set(b, mask >> b & 1 == 1);
            }
            // pinned exterior sites follow the pins
            for i in n..dt.n_sites() {
                c.status.set(i, dt.pinned_open[i]);
            }
            let by_path = crossing_by_exploration(&c, &dt, &d).unwrap();
            assert_eq!(by_path, dt.has_crossing(&c), "{cols}x{rows} mask {mask:b}");
            agree += 1;
        }
        assert_eq!(agree, 1 << n);
    }

    #[test]
    fn exploration_equals_connectivity_exhaustively() {
        for (c, r) in [
            (1, 1),
            (12, 1),
            (1, 12),
            (6, 2),
            (2, 6),
            (3, 4),
            (4, 3),
            (4, 4),
            (8, 2),
            (2, 8),
        ] {
            exhaustive(c, r);
        }
    }

    #[test]
    fn lazy_and_full_paths_coincide() {
        let d = corner(20, 17);
        let model = PercolationModel::homogeneous(LatticeKind::Triangular, Mode::Site, 0.5).unwrap();
        let dt = d.discrete_triplet(&model).unwrap();
        for k in 0..200 {
            let s = rng::sample_seed(8, k);
            let lazy = explore(&d, 0.5, s).unwrap();
            let cfg = dt.configuration(s);
            let full = explore_with(&d, |c| cfg.status[dt.site_index(c.site()).unwrap()]).unwrap();
            assert_eq!(lazy, full);
            assert_eq!(
                lazy.stop_cause == StopCause::HitCd,
                dt.crossing_lazy(s, &mut Default::default())
            );
        }
    }

    #[test]
    fn paths_are_self_avoiding_and_records_append_only() {
        for bc in [BoundaryCondition::Corner, BoundaryCondition::Chordal] {
            let d = HexDomain::new(24, 24, bc).unwrap();
            for k in 0..2000 {
                let path = explore(&d, 0.5, rng::sample_seed(2, k)).unwrap();
                let mut seen = HashSet::new();
                for v in &path.vertices {
                    assert!(seen.insert((v[0].to_bits(), v[1].to_bits())), "repeated vertex");
                }
                let cells: HashSet<_> = path.revealed.iter().map(|(c, _)| *c).collect();
                assert_eq!(cells.len(), path.revealed.len());
                for (l, r) in &path.pairs {
                    assert!(l.is_adjacent(*r));
                    assert_ne!(path.state(*l), CellState::Open);
                    assert_ne!(path.state(*r), CellState::Closed);
                }
                if bc == BoundaryCondition::Chordal {
                    assert_eq!(path.stop_cause, StopCause::Exhausted);
                    let last = path.vertices.last().unwrap();
                    assert!((last[0] - d.x_mark()).abs() <= 0.5);
                    assert!(last[1] > (d.rows as f64 - 0.5) * S3 / 2.0);
                }
            }
        }
    }

    #[test]
    fn revealing_twice_returns_first_value() {
        let mut path = explore_with(&corner(3, 3), |_| true).unwrap();
        let c = path.revealed[0].0;
        let mut flip = |_| false;
        assert!(path.reveal(c, &mut flip));
        assert_eq!(path.state(c), CellState::Open);
    }

    #[test]
    fn blocking_and_crossing_configurations() {
        let d = corner(7, 6);
        // a closed column blocks every horizontal crossing
        let blocked = explore_with(&d, |c| c.i != 3).unwrap();
        assert_eq!(blocked.stop_cause, StopCause::HitBc);
        // an open row crosses
        let crossed = explore_with(&d, |c| c.j == 2).unwrap();
        assert_eq!(crossed.stop_cause, StopCause::HitCd);
    }

    #[test]
    fn half_plane_image_endpoints() {
        let d = corner(16, 18);
        let mut crossed = 0;
        for k in 0..60 {
            let path = explore(&d, 0.5, rng::sample_seed(4, k)).unwrap();
            let img = path_to_halfplane(&path, &d).unwrap();
            assert_eq!(img.points[0], Complex64::new(0.0, 0.0));
            assert!(img.points.iter().all(|p| p.im >= 0.0 && p.is_finite()));
            let (b, dd) = (img.marks[1].re, img.marks[3].re);
            assert!(b > 0.0 && dd < 0.0);
            let last = *img.points.last().unwrap();
            assert!(last.im.abs() < 1e-9);
            match path.stop_cause {
                StopCause::HitCd => {
                    crossed += 1;
                    assert!(last.re <= dd + 1e-9, "{last} vs d = {dd}");
                }
                StopCause::HitBc => assert!(last.re >= b - 1e-9),
                StopCause::Exhausted => unreachable!(),
            }
        }
        assert!(crossed > 0 && crossed < 60);
    }
}
