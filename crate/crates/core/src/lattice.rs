//! Periodic planar graphs and Bernoulli percolation on them.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt;

use bitvec::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeKind {
    Square,
    Triangular,
    Hexagonal,
}

impl fmt::Display for LatticeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LatticeKind::Square => "square",
            LatticeKind::Triangular => "triangular",
            LatticeKind::Hexagonal => "hexagonal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Site,
    Bond,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Site => "site",
            Mode::Bond => "bond",
        })
    }
}

/// A site: sublattice `s` in the cell `m·b₀ + n·b₁`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SiteKey {
    pub m: i64,
    pub n: i64,
    pub s: usize,
}

/// Edge `e` of the cell edge list, anchored at the cell of its `from` end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeKey {
    pub m: i64,
    pub n: i64,
    pub e: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellEdge {
    pub from: usize,
    pub to: usize,
    pub dm: i64,
    pub dn: i64,
}

/// One step out of a site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub to: usize,
    pub dm: i64,
    pub dn: i64,
    pub edge: usize,
    /// Offset of the edge anchor relative to the current cell.
    pub anchor_dm: i64,
    pub anchor_dn: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicGraph {
    pub kind: LatticeKind,
    pub basis: [[f64; 2]; 2],
    pub offsets: Vec<[f64; 2]>,
    pub edges: Vec<CellEdge>,
    /// Nearest-neighbour distance of the embedding before any plane map.
    /// Rasterization scales positions by `δ / mesh`.
    pub mesh: f64,
    steps: Vec<Vec<Step>>,
}

/// Builds the regular embedding with nearest-neighbour distance `mesh`.
pub fn build_graph(kind: LatticeKind, mesh: f64) -> Result<PeriodicGraph> {
    if !(mesh > 0.0) || !mesh.is_finite() {
        return Err(Error::NonPositiveMesh(mesh));
    }
    let d = mesh;
    let s3 = 3f64.sqrt();
    let e = |from, to, dm, dn| CellEdge { from, to, dm, dn };
    let (basis, offsets, edges) = match kind {
        LatticeKind::Square => (
            [[d, 0.0], [0.0, d]],
            vec![[0.0, 0.0]],
            vec![e(0, 0, 1, 0), e(0, 0, 0, 1)],
        ),
        LatticeKind::Triangular => (
            [[d, 0.0], [d / 2.0, d * s3 / 2.0]],
            vec![[0.0, 0.0]],
            vec![e(0, 0, 1, 0), e(0, 0, 0, 1), e(0, 0, -1, 1)],
        ),
        LatticeKind::Hexagonal => (
            [[s3 * d, 0.0], [s3 * d / 2.0, 1.5 * d]],
            vec![[0.0, 0.0], [0.0, d]],
            vec![e(0, 1, 0, 0), e(0, 1, 0, -1), e(0, 1, 1, -1)],
        ),
    };
    let g = PeriodicGraph::from_parts(kind, basis, offsets, edges, mesh);
    g.check_invariants()?;
    Ok(g)
}

impl PeriodicGraph {
    fn from_parts(
        kind: LatticeKind,
        basis: [[f64; 2]; 2],
        offsets: Vec<[f64; 2]>,
        edges: Vec<CellEdge>,
        mesh: f64,
    ) -> Self {
        let mut steps = vec![Vec::new(); offsets.len()];
        for (i, ce) in edges.iter().enumerate() {
            steps[ce.from].push(Step {
                to: ce.to,
                dm: ce.dm,
                dn: ce.dn,
                edge: i,
                anchor_dm: 0,
                anchor_dn: 0,
            });
            steps[ce.to].push(Step {
                to: ce.from,
                dm: -ce.dm,
                dn: -ce.dn,
                edge: i,
                anchor_dm: -ce.dm,
                anchor_dn: -ce.dn,
            });
        }
        PeriodicGraph {
            kind,
            basis,
            offsets,
            edges,
            mesh,
            steps,
        }
    }

    pub fn sites_per_cell(&self) -> usize {
        self.offsets.len()
    }

    pub fn position(&self, k: SiteKey) -> [f64; 2] {
        let [b0, b1] = self.basis;
        let o = self.offsets[k.s];
        [
            k.m as f64 * b0[0] + k.n as f64 * b1[0] + o[0],
            k.m as f64 * b0[1] + k.n as f64 * b1[1] + o[1],
        ]
    }

    pub fn steps(&self, s: usize) -> &[Step] {
        &self.steps[s]
    }

    pub fn degree(&self, s: usize) -> usize {
        self.steps[s].len()
    }

    pub fn neighbors(&self, k: SiteKey) -> impl Iterator<Item = (SiteKey, EdgeKey)> + '_ {
        self.steps[k.s].iter().map(move |st| {
            (
                SiteKey {
                    m: k.m + st.dm,
                    n: k.n + st.dn,
                    s: st.to,
                },
                EdgeKey {
                    m: k.m + st.anchor_dm,
                    n: k.n + st.anchor_dn,
                    e: st.edge,
                },
            )
        })
    }

    pub fn edge_ends(&self, k: EdgeKey) -> (SiteKey, SiteKey) {
        let ce = self.edges[k.e];
        (
            SiteKey {
                m: k.m,
                n: k.n,
                s: ce.from,
            },
            SiteKey {
                m: k.m + ce.dm,
                n: k.n + ce.dn,
                s: ce.to,
            },
        )
    }

    /// Coordinates of a point in the cell basis (inverse of the embedding
    /// without the sublattice offset).
    pub fn to_cell_coords(&self, p: [f64; 2]) -> [f64; 2] {
        let [b0, b1] = self.basis;
        let det = b0[0] * b1[1] - b1[0] * b0[1];
        [(p[0] * b1[1] - p[1] * b1[0]) / det, (b0[0] * p[1] - b0[1] * p[0]) / det]
    }

    /// Distinct edge lengths (to 1e-9 relative), sorted.
    pub fn edge_lengths(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for (i, _) in self.edges.iter().enumerate() {
            let (a, b) = self.edge_ends(EdgeKey { m: 0, n: 0, e: i });
            let (pa, pb) = (self.position(a), self.position(b));
            let len = (pa[0] - pb[0]).hypot(pa[1] - pb[1]);
            if !out.iter().any(|&l| (l - len).abs() <= 1e-9 * len.max(1.0)) {
                out.push(len);
            }
        }
        out.sort_by(|a, b| a.total_cmp(b));
        out
    }

    /// Checks no self-loops, bounded degree, finite edges, non-degenerate
    /// basis and connectivity. Translation invariance holds by construction.
    pub fn check_invariants(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidGraph(m.to_string()));
        let [b0, b1] = self.basis;
        if (b0[0] * b1[1] - b1[0] * b0[1]).abs() < 1e-300 {
            return bad("degenerate basis");
        }
        for ce in &self.edges {
            if ce.from == ce.to && ce.dm == 0 && ce.dn == 0 {
                return bad("self-loop");
            }
            if ce.from >= self.sites_per_cell() || ce.to >= self.sites_per_cell() {
                return bad("edge references a missing sublattice");
            }
        }
        for s in 0..self.sites_per_cell() {
            if self.degree(s) == 0 || self.degree(s) > 8 {
                return bad("degree outside 1..=8");
            }
        }
        if self.edge_lengths().iter().any(|l| !l.is_finite() || *l <= 0.0) {
            return bad("edge of zero or infinite length");
        }
        // Everything within two cells must be reachable inside a window of four.
        let origin = SiteKey { m: 0, n: 0, s: 0 };
        let mut seen = HashSet::from([origin]);
        let mut queue = VecDeque::from([origin]);
        while let Some(k) = queue.pop_front() {
            for (nb, _) in self.neighbors(k) {
                if nb.m.abs() <= 4 && nb.n.abs() <= 4 && seen.insert(nb) {
                    queue.push_back(nb);
                }
            }
        }
        for m in -2..=2 {
            for n in -2..=2 {
                for s in 0..self.sites_per_cell() {
                    if !seen.contains(&SiteKey { m, n, s }) {
                        return bad("graph is not connected");
                    }
                }
            }
        }
        Ok(())
    }

    /// Image of the embedding under `g`; combinatorics unchanged.
    pub fn apply_map(&self, g: &PlaneMap) -> PeriodicGraph {
        let basis = [g.apply(self.basis[0]), g.apply(self.basis[1])];
        let offsets = self.offsets.iter().map(|&o| g.apply(o)).collect();
        PeriodicGraph::from_parts(self.kind, basis, offsets, self.edges.clone(), self.mesh)
    }
}

/// An invertible linear map of the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneMap {
    pub matrix: [[f64; 2]; 2],
}

impl PlaneMap {
    pub fn new(matrix: [[f64; 2]; 2]) -> Result<Self> {
        let det = matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0];
        if det == 0.0 || !det.is_finite() {
            return Err(Error::SingularMap(det));
        }
        Ok(PlaneMap { matrix })
    }

    pub fn identity() -> Self {
        PlaneMap {
            matrix: [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    pub fn rotation(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        PlaneMap {
            matrix: [[c, -s], [s, c]],
        }
    }

    pub fn diag(a: f64, b: f64) -> Result<Self> {
        PlaneMap::new([[a, 0.0], [0.0, b]])
    }

    pub fn det(&self) -> f64 {
        let m = self.matrix;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn inverse(&self) -> Self {
        let m = self.matrix;
        let d = self.det();
        PlaneMap {
            matrix: [[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]],
        }
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let m = self.matrix;
        [m[0][0] * p[0] + m[0][1] * p[1], m[1][0] * p[0] + m[1][1] * p[1]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Parity {
    Even,
    Odd,
}

/// Orbit of sites (or edges) under the even sublattice of translations:
/// the sublattice index plus the parity of `m + n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassId {
    pub index: usize,
    pub parity: Parity,
}

impl ClassId {
    pub fn of(index: usize, m: i64, n: i64) -> Self {
        let parity = if (m + n).rem_euclid(2) == 0 {
            Parity::Even
        } else {
            Parity::Odd
        };
        ClassId { index, parity }
    }

    fn slot(&self) -> usize {
        2 * self.index + (self.parity == Parity::Odd) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum KeyShape {
    Index,
    Parity,
    Both,
}

fn parse_class_key(key: &str) -> Result<(KeyShape, Option<usize>, Option<Parity>)> {
    let parity = |s: &str| match s {
        "even" => Some(Parity::Even),
        "odd" => Some(Parity::Odd),
        _ => None,
    };
    if let Some(p) = parity(key) {
        return Ok((KeyShape::Parity, None, Some(p)));
    }
    if let Ok(i) = key.parse::<usize>() {
        return Ok((KeyShape::Index, Some(i), None));
    }
    if let Some((a, b)) = key.split_once(':') {
        if let (Ok(i), Some(p)) = (a.parse::<usize>(), parity(b)) {
            return Ok((KeyShape::Both, Some(i), Some(p)));
        }
    }
    Err(Error::UnknownClass(key.to_string()))
}

/// Open probabilities: either one number, or a map from class keys
/// (`"0"`, `"even"`, `"0:odd"`) to numbers. All keys of a map must have the
/// same shape and together cover every class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OpenProb {
    Uniform(f64),
    ByClass(BTreeMap<String, f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PercolationModel {
    pub graph: PeriodicGraph,
    pub mode: Mode,
    pub open_prob: OpenProb,
    table: Vec<f64>,
}

impl PercolationModel {
    pub fn new(graph: PeriodicGraph, mode: Mode, open_prob: OpenProb) -> Result<Self> {
        let classes = match mode {
            Mode::Site => graph.sites_per_cell(),
            Mode::Bond => graph.edges.len(),
        };
        let check = |class: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(v)
            } else {
                Err(Error::ProbabilityOutOfRange {
                    class: class.to_string(),
                    value: v,
                })
            }
        };
        let table = match &open_prob {
            OpenProb::Uniform(p) => vec![check("*", *p)?; 2 * classes],
            OpenProb::ByClass(map) => {
                let mut table = vec![f64::NAN; 2 * classes];
                let mut shape = None;
                for (key, &v) in map {
                    let v = check(key, v)?;
                    let (sh, idx, par) = parse_class_key(key)?;
                    if shape.is_some_and(|s| s != sh) {
                        return Err(Error::InvalidArgument(
                            "class keys mix index, parity and index:parity forms".into(),
                        ));
                    }
                    shape = Some(sh);
                    if idx.is_some_and(|i| i >= classes) {
                        return Err(Error::UnknownClass(key.clone()));
                    }
                    for i in 0..classes {
                        for p in [Parity::Even, Parity::Odd] {
                            if idx.is_none_or(|x| x == i) && par.is_none_or(|x| x == p) {
                                table[ClassId { index: i, parity: p }.slot()] = v;
                            }
                        }
                    }
                }
                if let Some(slot) = table.iter().position(|v| v.is_nan()) {
                    let c = ClassId {
                        index: slot / 2,
                        parity: if slot % 2 == 0 { Parity::Even } else { Parity::Odd },
                    };
                    return Err(Error::MissingClass(format!("{c:?}")));
                }
                table
            }
        };
        Ok(PercolationModel {
            graph,
            mode,
            open_prob,
            table,
        })
    }

    pub fn homogeneous(kind: LatticeKind, mode: Mode, p: f64) -> Result<Self> {
        PercolationModel::new(build_graph(kind, 1.0)?, mode, OpenProb::Uniform(p))
    }

    /// Homogeneous model at its stored critical probability.
    pub fn critical(kind: LatticeKind, mode: Mode) -> Result<Self> {
        let probe = PercolationModel::homogeneous(kind, mode, 0.5)?;
        let pc = critical_probability(&probe)?;
        probe.with_uniform(pc)
    }

    pub fn with_uniform(&self, p: f64) -> Result<Self> {
        PercolationModel::new(self.graph.clone(), self.mode, OpenProb::Uniform(p))
    }

    pub fn is_homogeneous(&self) -> bool {
        self.table.iter().all(|&v| v == self.table[0])
    }

    #[inline]
    pub fn prob(&self, class: ClassId) -> f64 {
        self.table[class.slot()]
    }

    #[inline]
    pub fn site_prob(&self, k: SiteKey) -> f64 {
        self.table[ClassId::of(k.s, k.m, k.n).slot()]
    }

    #[inline]
    pub fn edge_prob(&self, k: EdgeKey) -> f64 {
        self.table[ClassId::of(k.e, k.m, k.n).slot()]
    }

    /// Same model with the embedding rescaled to nearest-neighbour distance
    /// `mesh`.
    pub fn at_mesh(&self, mesh: f64) -> Result<Self> {
        if !(mesh > 0.0) {
            return Err(Error::NonPositiveMesh(mesh));
        }
        let s = mesh / self.graph.mesh;
        let mut out = self.apply_map(&PlaneMap::diag(s, s)?)?;
        out.graph.mesh = mesh;
        Ok(out)
    }

    /// `gM`: same probabilities, embedding moved by `g`.
    pub fn apply_map(&self, g: &PlaneMap) -> Result<Self> {
        PlaneMap::new(g.matrix)?;
        Ok(PercolationModel {
            graph: self.graph.apply_map(g),
            mode: self.mode,
            open_prob: self.open_prob.clone(),
            table: self.table.clone(),
        })
    }

    pub fn id(&self) -> String {
        let p = match &self.open_prob {
            OpenProb::Uniform(p) => format!("{p}"),
            OpenProb::ByClass(m) => m.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(","),
        };
        format!("{}-{}-p{}", self.graph.kind, self.mode, p)
    }

    #[inline]
    pub fn site_uniform(seed: u64, k: SiteKey) -> f64 {
        rng::unit3(seed, pack(k.m, k.n), k.s as u64)
    }

    #[inline]
    pub fn edge_uniform(seed: u64, k: EdgeKey) -> f64 {
        rng::unit3(seed, pack(k.m, k.n), 0x1000 + k.e as u64)
    }

    #[inline]
    pub fn site_open(&self, seed: u64, k: SiteKey) -> bool {
        Self::site_uniform(seed, k) < self.site_prob(k)
    }

    #[inline]
    pub fn edge_open(&self, seed: u64, k: EdgeKey) -> bool {
        Self::edge_uniform(seed, k) < self.edge_prob(k)
    }
}

#[inline]
pub(crate) fn pack(m: i64, n: i64) -> u64 {
    ((m as u32 as u64) << 32) | n as u32 as u64
}

/// Stored critical probability of a homogeneous built-in model.
pub fn critical_probability(model: &PercolationModel) -> Result<f64> {
    let name = format!("{}-{}", model.graph.kind, model.mode);
    if !model.is_homogeneous() {
        return Err(Error::NoStoredThreshold(format!("inhomogeneous {name}")));
    }
    let s = (std::f64::consts::PI / 18.0).sin();
    match (model.graph.kind, model.mode) {
        (LatticeKind::Triangular, Mode::Site) => Ok(0.5),
        (LatticeKind::Square, Mode::Bond) => Ok(0.5),
        (LatticeKind::Square, Mode::Site) => Ok(0.592_746_0),
        (LatticeKind::Hexagonal, Mode::Site) => Ok(0.697_040_2),
        (LatticeKind::Hexagonal, Mode::Bond) => Ok(1.0 - 2.0 * s),
        (LatticeKind::Triangular, Mode::Bond) => Ok(2.0 * s),
    }
}

/// JSON model descriptor `{"lattice", "mode", "p"}` where `p` is a number,
/// a class map or the string `"critical"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub lattice: LatticeKind,
    pub mode: Mode,
    pub p: ProbSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProbSpec {
    Value(OpenProb),
    Named(String),
}

impl ModelDescriptor {
    pub fn build(&self) -> Result<PercolationModel> {
        match &self.p {
            ProbSpec::Value(p) => PercolationModel::new(build_graph(self.lattice, 1.0)?, self.mode, p.clone()),
            ProbSpec::Named(s) if s == "critical" => PercolationModel::critical(self.lattice, self.mode),
            ProbSpec::Named(s) => Err(Error::InvalidArgument(format!("unknown probability `{s}`"))),
        }
    }
}

/// A finite set of instantiated sites: interior sites plus every site
/// adjacent to one. `interior[i]` flags the interior ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub sites: Vec<SiteKey>,
    pub interior: Vec<bool>,
    /// Edges with at least one interior endpoint (statused in bond mode).
    pub edges: Vec<EdgeKey>,
}

impl Region {
    pub fn from_interior(graph: &PeriodicGraph, interior: impl IntoIterator<Item = SiteKey>) -> Self {
        let mut inner: Vec<SiteKey> = interior.into_iter().collect();
        inner.sort_unstable();
        inner.dedup();
        let inner_set: HashSet<SiteKey> = inner.iter().copied().collect();
        let mut extra = Vec::new();
        let mut edges = Vec::new();
        for &k in &inner {
            for (nb, e) in graph.neighbors(k) {
                if !inner_set.contains(&nb) {
                    extra.push(nb);
                    edges.push(e);
                } else if k < nb {
                    edges.push(e);
                }
            }
        }
        extra.sort_unstable();
        extra.dedup();
        edges.sort_unstable();
        edges.dedup();
        let mut interior = vec![true; inner.len()];
        interior.extend(std::iter::repeat_n(false, extra.len()));
        let mut sites = inner;
        sites.extend(extra);
        Region { sites, interior, edges }
    }

    /// Cells `m ∈ [0, w)`, `n ∈ [0, h)` with every sublattice as interior.
    pub fn cells(graph: &PeriodicGraph, w: i64, h: i64) -> Self {
        let spc = graph.sites_per_cell();
        Region::from_interior(
            graph,
            (0..w).flat_map(|m| (0..h).flat_map(move |n| (0..spc).map(move |s| SiteKey { m, n, s }))),
        )
    }

    pub fn translate(&self, dm: i64, dn: i64) -> Self {
        Region {
            sites: self
                .sites
                .iter()
                .map(|k| SiteKey {
                    m: k.m + dm,
                    n: k.n + dn,
                    s: k.s,
                })
                .collect(),
            interior: self.interior.clone(),
            edges: self
                .edges
                .iter()
                .map(|k| EdgeKey {
                    m: k.m + dm,
                    n: k.n + dn,
                    e: k.e,
                })
                .collect(),
        }
    }

    pub fn interior_count(&self) -> usize {
        self.interior.iter().filter(|&&b| b).count()
    }
}

/// One sample of the product measure on a region: a bit per site (site
/// mode) or per edge (bond mode), in region order.
#[derive(Debug, Clone)]
pub struct Configuration<'a> {
    pub model: &'a PercolationModel,
    pub region: &'a Region,
    pub status: BitVec,
    pub seed: u64,
}

pub fn sample_configuration<'a>(model: &'a PercolationModel, region: &'a Region, seed: u64) -> Configuration<'a> {
    let status: BitVec = match model.mode {
        Mode::Site => region.sites.iter().map(|&k| model.site_open(seed, k)).collect(),
        Mode::Bond => region.edges.iter().map(|&k| model.edge_open(seed, k)).collect(),
    };
    Configuration {
        model,
        region,
        status,
        seed,
    }
}

impl<'a> Configuration<'a> {
    pub fn open_count(&self) -> usize {
        self.status.count_ones()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn degrees_and_bases() {
        let sq = build_graph(LatticeKind::Square, 1.0).unwrap();
        assert_eq!(sq.degree(0), 4);
        assert_eq!(sq.basis, [[1.0, 0.0], [0.0, 1.0]]);
        let tr = build_graph(LatticeKind::Triangular, 1.0).unwrap();
        assert_eq!(tr.degree(0), 6);
        assert_abs_diff_eq!(tr.basis[1][0], 0.5);
        assert_abs_diff_eq!(tr.basis[1][1], 3f64.sqrt() / 2.0);
        let hx = build_graph(LatticeKind::Hexagonal, 1.0).unwrap();
        assert_eq!(hx.sites_per_cell(), 2);
        assert_eq!((hx.degree(0), hx.degree(1)), (3, 3));
        for g in [&sq, &tr, &hx] {
            let l = g.edge_lengths();
            assert_eq!(l.len(), 1);
            assert_abs_diff_eq!(l[0], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_bad_mesh() {
        assert_eq!(build_graph(LatticeKind::Square, 0.0), Err(Error::NonPositiveMesh(0.0)));
        assert!(build_graph(LatticeKind::Square, -1.0).is_err());
    }

    #[test]
    fn neighbours_are_symmetric() {
        for kind in [LatticeKind::Square, LatticeKind::Triangular, LatticeKind::Hexagonal] {
            let g = build_graph(kind, 1.0).unwrap();
            for s in 0..g.sites_per_cell() {
                let k = SiteKey { m: 3, n: -2, s };
                for (nb, e) in g.neighbors(k) {
                    assert!(g.neighbors(nb).any(|(b, e2)| b == k && e2 == e));
                    let (a, b) = g.edge_ends(e);
                    assert!((a == k && b == nb) || (a == nb && b == k));
                }
            }
        }
    }

    #[test]
    fn plane_maps() {
        assert!(matches!(
            PlaneMap::new([[1.0, 2.0], [2.0, 4.0]]),
            Err(Error::SingularMap(_))
        ));
        let sq = build_graph(LatticeKind::Square, 1.0).unwrap();
        assert_eq!(sq.apply_map(&PlaneMap::identity()).basis, sq.basis);
        let stretched = sq.apply_map(&PlaneMap::diag(2.0, 1.0).unwrap());
        let l = stretched.edge_lengths();
        assert_eq!(l.len(), 2);
        assert_abs_diff_eq!(l[0], 1.0);
        assert_abs_diff_eq!(l[1], 2.0);
        // a quarter turn maps Z² onto itself
        let rot = sq.apply_map(&PlaneMap::rotation(std::f64::consts::FRAC_PI_2));
        for b in rot.basis {
            let c = sq.to_cell_coords(b);
            assert!(c.iter().all(|x| (x - x.round()).abs() < 1e-12));
        }
    }

    #[test]
    fn class_maps() {
        let g = build_graph(LatticeKind::Square, 1.0).unwrap();
        let m = PercolationModel::new(
            g.clone(),
            Mode::Site,
            OpenProb::ByClass(BTreeMap::from([("even".into(), 0.2), ("odd".into(), 0.7)])),
        )
        .unwrap();
        assert_eq!(m.site_prob(SiteKey { m: 1, n: 1, s: 0 }), 0.2);
        assert_eq!(m.site_prob(SiteKey { m: 1, n: 0, s: 0 }), 0.7);
        assert!(!m.is_homogeneous());
        let missing = PercolationModel::new(
            g.clone(),
            Mode::Site,
            OpenProb::ByClass(BTreeMap::from([("even".into(), 0.2)])),
        );
        assert!(matches!(missing, Err(Error::MissingClass(_))));
        let bad = PercolationModel::new(g, Mode::Site, OpenProb::Uniform(1.5));
        assert!(matches!(bad, Err(Error::ProbabilityOutOfRange { .. })));
    }

    #[test]
    fn thresholds() {
        let pc = |k, m| critical_probability(&PercolationModel::homogeneous(k, m, 0.5).unwrap()).unwrap();
        assert_eq!(pc(LatticeKind::Triangular, Mode::Site), 0.5);
        assert_eq!(pc(LatticeKind::Square, Mode::Bond), 0.5);
        assert_eq!(pc(LatticeKind::Square, Mode::Site), 0.592_746_0);
        // duality of the triangular and hexagonal bond thresholds
        assert_abs_diff_eq!(
            pc(LatticeKind::Triangular, Mode::Bond) + pc(LatticeKind::Hexagonal, Mode::Bond),
            1.0,
            epsilon = 1e-15
        );
        let inhom = PercolationModel::new(
            build_graph(LatticeKind::Square, 1.0).unwrap(),
            Mode::Site,
            OpenProb::ByClass(BTreeMap::from([("even".into(), 0.2), ("odd".into(), 0.7)])),
        )
        .unwrap();
        assert!(matches!(critical_probability(&inhom), Err(Error::NoStoredThreshold(_))));
    }

    #[test]
    fn descriptor_json() {
        let d: ModelDescriptor = serde_json::from_str(r#"{"lattice":"square","mode":"site","p":"critical"}"#).unwrap();
        assert_eq!(d.build().unwrap().site_prob(SiteKey { m: 0, n: 0, s: 0 }), 0.592_746_0);
        let d: ModelDescriptor =
            serde_json::from_str(r#"{"lattice":"hexagonal","mode":"site","p":{"0":0.6,"1":0.8}}"#).unwrap();
        let m = d.build().unwrap();
        assert_eq!(m.site_prob(SiteKey { m: 0, n: 0, s: 1 }), 0.8);
        let d: ModelDescriptor = serde_json::from_str(r#"{"lattice":"triangular","mode":"bond","p":0.3}"#).unwrap();
        assert!(d.build().unwrap().is_homogeneous());
    }

    #[test]
    fn degenerate_probabilities() {
        let g = build_graph(LatticeKind::Square, 1.0).unwrap();
        let region = Region::cells(&g, 20, 20);
        for (p, want) in [(1.0, true), (0.0, false)] {
            let m = PercolationModel::new(g.clone(), Mode::Site, OpenProb::Uniform(p)).unwrap();
            let c = sample_configuration(&m, &region, 3);
            assert!(c.status.iter().all(|b| *b == want));
        }
    }

    #[test]
    fn open_fraction() {
        let m = PercolationModel::homogeneous(LatticeKind::Square, Mode::Site, 0.5).unwrap();
        let region = Region::cells(&m.graph, 1000, 1000);
        let c = sample_configuration(&m, &region, 11);
        let f = c.open_count() as f64 / c.status.len() as f64;
        assert!((f - 0.5).abs() < 0.002, "{f}");
    }

    #[test]
    fn region_contains_edge_adjacent_sites() {
        let g = build_graph(LatticeKind::Square, 1.0).unwrap();
        let r = Region::cells(&g, 3, 2);
        assert_eq!(r.interior_count(), 6);
        assert_eq!(r.sites.len(), 6 + 10);
        // 7 internal edges + 10 outgoing
        assert_eq!(r.edges.len(), 17);
    }
}
