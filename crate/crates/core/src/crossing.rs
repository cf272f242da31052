//! Rasterized triplets `(D, I, J)` and crossing probabilities.

use std::collections::{HashMap, VecDeque};

use bitvec::prelude::*;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{self, BBox, Point};
use crate::lattice::{
    sample_configuration, Configuration, LatticeKind, Mode, PercolationModel, PlaneMap, Region, SiteKey,
};
use crate::rng;
use crate::stats;
use crate::{Error, Result};

/// A point on the polygon boundary: side `edge` (from vertex `edge` to
/// vertex `edge + 1`) at parameter `t ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcPoint {
    pub edge: usize,
    pub t: f64,
}

/// Boundary arc running in vertex order from `start` to `end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryArc {
    pub start: ArcPoint,
    pub end: ArcPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub name: String,
    pub polygon: Vec<Point>,
    pub arc_i: BoundaryArc,
    pub arc_j: BoundaryArc,
}

impl Triplet {
    pub fn new(name: impl Into<String>, polygon: Vec<Point>, arc_i: BoundaryArc, arc_j: BoundaryArc) -> Result<Self> {
        let t = Triplet {
            name: name.into(),
            polygon,
            arc_i,
            arc_j,
        };
        t.validate()?;
        Ok(t)
    }

    /// Width 1, height `r`; `I` is the bottom side and `J` the top side.
    pub fn rectangle(r: f64) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "aspect ratio must be positive, got {r}"
            )));
        }
        Triplet::new(
            format!("rect-r{r}"),
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, r], [0.0, r]],
            BoundaryArc {
                start: ArcPoint { edge: 0, t: 0.0 },
                end: ArcPoint { edge: 0, t: 1.0 },
            },
            BoundaryArc {
                start: ArcPoint { edge: 2, t: 0.0 },
                end: ArcPoint { edge: 2, t: 1.0 },
            },
        )
    }

    /// Unit equilateral triangle `A=(0,0)`, `B=(1,0)`, `C=(1/2,√3/2)` with
    /// `I = CA` and `J` the segment of `BC` of length `x` starting at `B`.
    pub fn carleson(x: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&x) || x == 0.0 {
            return Err(Error::InvalidArgument(format!(
                "segment length must be in (0, 1], got {x}"
            )));
        }
        Triplet::new(
            format!("carleson-x{x}"),
            vec![[0.0, 0.0], [1.0, 0.0], [0.5, 3f64.sqrt() / 2.0]],
            BoundaryArc {
                start: ArcPoint { edge: 2, t: 0.0 },
                end: ArcPoint { edge: 2, t: 1.0 },
            },
            BoundaryArc {
                start: ArcPoint { edge: 1, t: 0.0 },
                end: ArcPoint { edge: 1, t: x },
            },
        )
    }

    pub fn map(&self, g: &PlaneMap) -> Result<Self> {
        let mut out = self.clone();
        out.polygon = self.polygon.iter().map(|&p| g.apply(p)).collect();
        out.validate()?;
        Ok(out)
    }

    fn position(&self, a: ArcPoint) -> f64 {
        a.edge as f64 + a.t
    }

    pub fn point(&self, a: ArcPoint) -> Point {
        let n = self.polygon.len();
        geometry::lerp(self.polygon[a.edge], self.polygon[(a.edge + 1) % n], a.t)
    }

    /// Arc as a polyline in boundary order.
    pub fn arc_polyline(&self, arc: &BoundaryArc) -> Vec<Point> {
        let n = self.polygon.len();
        let mut pts = vec![self.point(arc.start)];
        let (s, e) = (self.position(arc.start), self.position(arc.end));
        let len = if e > s { e - s } else { e + n as f64 - s };
        let mut v = arc.start.edge + 1;
        let mut walked = (arc.start.edge + 1) as f64 - s;
        while walked < len {
            pts.push(self.polygon[v % n]);
            v += 1;
            walked += 1.0;
        }
        pts.push(self.point(arc.end));
        pts.dedup();
        pts
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.polygon.len();
        if n < 3 || self.polygon.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::DegeneratePolygon("fewer than three finite vertices".into()));
        }
        if !geometry::is_simple(&self.polygon) {
            return Err(Error::DegeneratePolygon("polygon is not simple".into()));
        }
        for a in [self.arc_i, self.arc_j] {
            for p in [a.start, a.end] {
                if p.edge >= n || !(0.0..=1.0).contains(&p.t) {
                    return Err(Error::InvalidArcs(format!("arc point {p:?} outside the boundary")));
                }
            }
            if self.position(a.start) == self.position(a.end) {
                return Err(Error::InvalidArcs("arc of zero length".into()));
            }
        }
        // half-open [start, end) intervals on the boundary circle
        let total = n as f64;
        let norm = |x: f64| x.rem_euclid(total);
        let interval = |a: BoundaryArc| {
            let s = norm(self.position(a.start));
            let mut e = norm(self.position(a.end));
            if e <= s {
                e += total;
            }
            (s, e)
        };
        let (si, ei) = interval(self.arc_i);
        let (sj, ej) = interval(self.arc_j);
        let inside = |x: f64, s: f64, e: f64| {
            let x = if x < s { x + total } else { x };
            x >= s && x < e
        };
        if inside(sj, si, ei) || inside(si, sj, ej) {
            return Err(Error::InvalidArcs("arcs I and J overlap".into()));
        }
        Ok(())
    }
}

/// Nudges vertices that sit on lattice points inward by `δ·1e-7` along the
/// angle bisector.
fn perturb_vertices(poly: &[Point], model: &PercolationModel, scale: f64, delta: f64) -> Vec<Point> {
    let n = poly.len();
    let ccw = geometry::signed_area2(poly) > 0.0;
    let g = &model.graph;
    let mut out = poly.to_vec();
    for i in 0..n {
        let p = poly[i];
        let on_site = (0..g.sites_per_cell()).any(|s| {
            let o = g.offsets[s];
            let c = g.to_cell_coords([p[0] / scale - o[0], p[1] / scale - o[1]]);
            let k = SiteKey {
                m: c[0].round() as i64,
                n: c[1].round() as i64,
                s,
            };
            let q = g.position(k);
            geometry::dist([q[0] * scale, q[1] * scale], p) < 1e-9 * delta
        });
        if !on_site {
            continue;
        }
        let prev = poly[(i + n - 1) % n];
        let next = poly[(i + 1) % n];
        let unit = |v: Point| {
            let l = v[0].hypot(v[1]);
            [v[0] / l, v[1] / l]
        };
        let u1 = unit(geometry::sub(prev, p));
        let u2 = unit(geometry::sub(next, p));
        let mut b = [u1[0] + u2[0], u1[1] + u2[1]];
        let convex = geometry::cross(geometry::sub(p, prev), geometry::sub(next, p)) > 0.0;
        if b[0].hypot(b[1]) < 1e-12 {
            // straight angle: use the inward normal
            b = if ccw { [-u2[1], u2[0]] } else { [u2[1], -u2[0]] };
        } else if convex != ccw {
            b = [-b[0], -b[1]];
        }
        let b = unit(b);
        out[i] = [p[0] + 1e-7 * delta * b[0], p[1] + 1e-7 * delta * b[1]];
    }
    out
}

/// A triplet at a fixed mesh: instantiated sites (interior first), edges
/// with an interior endpoint, CSR adjacency and the straddling edge sets.
#[derive(Debug, Clone)]
pub struct DiscreteTriplet {
    pub model: PercolationModel,
    pub mode: Mode,
    pub delta: f64,
    pub triplet_id: String,
    pub region: Region,
    pub positions: Vec<Point>,
    pub edges: Vec<(u32, u32)>,
    pub adj_start: Vec<u32>,
    /// `(neighbour, edge index)` pairs.
    pub adj: Vec<(u32, u32)>,
    pub e_i: Vec<u32>,
    pub e_j: Vec<u32>,
    /// Sites treated as open (resp. closed) whatever the sample says.
    pub pinned_open: BitVec,
    pub pinned_closed: BitVec,
    site_prob: Vec<f64>,
    edge_prob: Vec<f64>,
    j_marks: Vec<bool>,
}

pub fn rasterize(triplet: &Triplet, model: &PercolationModel, delta: f64) -> Result<DiscreteTriplet> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::NonPositiveMesh(delta));
    }
    triplet.validate()?;
    let g = &model.graph;
    let scale = delta / g.mesh;
    let raw = perturb_vertices(&triplet.polygon, model, scale, delta);
    let mut moved = triplet.clone();
    moved.polygon = raw;
    let poly = &moved.polygon;

    // candidate cells from the bounding box, padded by two cells
    let bb = BBox::of(poly);
    let corners = [bb.min, [bb.max[0], bb.min[1]], bb.max, [bb.min[0], bb.max[1]]];
    let (mut mlo, mut mhi, mut nlo, mut nhi) = (i64::MAX, i64::MIN, i64::MAX, i64::MIN);
    for c in corners {
        let cc = g.to_cell_coords([c[0] / scale, c[1] / scale]);
        mlo = mlo.min(cc[0].floor() as i64 - 2);
        mhi = mhi.max(cc[0].ceil() as i64 + 2);
        nlo = nlo.min(cc[1].floor() as i64 - 2);
        nhi = nhi.max(cc[1].ceil() as i64 + 2);
    }
    let cells = (mhi - mlo + 1) as f64 * (nhi - nlo + 1) as f64;
    if cells > 5e7 {
        return Err(Error::InvalidArgument(format!("mesh {delta} needs {cells:.0} cells")));
    }
    let pos = |k: SiteKey| {
        let p = g.position(k);
        [p[0] * scale, p[1] * scale]
    };
    let tol = 1e-9 * delta;
    let mut interior = Vec::new();
    for m in mlo..=mhi {
        for n in nlo..=nhi {
            for s in 0..g.sites_per_cell() {
                let k = SiteKey { m, n, s };
                let p = pos(k);
                if geometry::point_in_polygon(p, poly) && geometry::distance_to_boundary(p, poly) > tol {
                    interior.push(k);
                }
            }
        }
    }
    if interior.is_empty() {
        return Err(Error::MeshTooCoarse("no lattice site lies inside the domain".into()));
    }
    let region = Region::from_interior(g, interior);
    let index: HashMap<SiteKey, u32> = region.sites.iter().enumerate().map(|(i, &k)| (k, i as u32)).collect();
    let positions: Vec<Point> = region.sites.iter().map(|&k| pos(k)).collect();
    let edges: Vec<(u32, u32)> = region
        .edges
        .iter()
        .map(|&e| {
            let (a, b) = g.edge_ends(e);
            (index[&a], index[&b])
        })
        .collect();
    let mut deg = vec![0u32; region.sites.len() + 1];
    for &(a, b) in &edges {
        deg[a as usize + 1] += 1;
        deg[b as usize + 1] += 1;
    }
    for i in 1..deg.len() {
        deg[i] += deg[i - 1];
    }
    let adj_start = deg.clone();
    let mut fill = deg;
    let mut adj = vec![(0u32, 0u32); 2 * edges.len()];
    for (ei, &(a, b)) in edges.iter().enumerate() {
        adj[fill[a as usize] as usize] = (b, ei as u32);
        fill[a as usize] += 1;
        adj[fill[b as usize] as usize] = (a, ei as u32);
        fill[b as usize] += 1;
    }

    let straddlers = |arc: &BoundaryArc| -> Vec<u32> {
        let line = moved.arc_polyline(arc);
        let bb = BBox::of(&line).inflate(tol);
        let mut out = Vec::new();
        for (ei, &(a, b)) in edges.iter().enumerate() {
            let (pa, pb) = (positions[a as usize], positions[b as usize]);
            if !bb.overlaps_segment(pa, pb) {
                continue;
            }
            if line
                .windows(2)
                .any(|w| geometry::segments_intersect(pa, pb, w[0], w[1]))
            {
                out.push(ei as u32);
            }
        }
        out
    };
    let e_i = straddlers(&moved.arc_i);
    let e_j = straddlers(&moved.arc_j);
    if let Some(&e) = e_i.iter().find(|e| e_j.contains(e)) {
        let (a, b) = edges[e as usize];
        return Err(Error::MeshTooCoarse(format!(
            "edge {:?}-{:?} meets both I and J",
            positions[a as usize], positions[b as usize]
        )));
    }
    if e_i.is_empty() || e_j.is_empty() {
        return Err(Error::MeshTooCoarse("an arc meets no lattice edge".into()));
    }

    // interior connectivity
    let n_int = region.interior_count();
    let mut comp = vec![u32::MAX; n_int];
    let mut components = 0;
    for start in 0..n_int {
        if comp[start] != u32::MAX {
            continue;
        }
        components += 1;
        comp[start] = start as u32;
        let mut q = VecDeque::from([start]);
        while let Some(u) = q.pop_front() {
            for &(v, _) in &adj[adj_start[u] as usize..adj_start[u + 1] as usize] {
                let v = v as usize;
                if v < n_int && comp[v] == u32::MAX {
                    comp[v] = start as u32;
                    q.push_back(v);
                }
            }
        }
    }
    if components > 1 {
        return Err(Error::DisconnectedDomain { components });
    }

    let (site_prob, edge_prob) = match model.mode {
        Mode::Site => (region.sites.iter().map(|&k| model.site_prob(k)).collect(), Vec::new()),
        Mode::Bond => (Vec::new(), region.edges.iter().map(|&k| model.edge_prob(k)).collect()),
    };
    let mut j_marks = vec![false; region.sites.len()];
    for &e in &e_j {
        let (a, b) = edges[e as usize];
        j_marks[a as usize] = true;
        j_marks[b as usize] = true;
    }
    let n_sites = region.sites.len();
    Ok(DiscreteTriplet {
        model: model.clone(),
        mode: model.mode,
        delta,
        triplet_id: triplet.name.clone(),
        region,
        positions,
        edges,
        adj_start,
        adj,
        e_i,
        e_j,
        pinned_open: bitvec![0; n_sites],
        pinned_closed: bitvec![0; n_sites],
        site_prob,
        edge_prob,
        j_marks,
    })
}

/// Role of an instantiated site outside the interior set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exterior {
    /// Statused by the sample like any other site.
    Free,
    /// Pinned open; edges to it form `E_I`.
    ArcI,
    /// Pinned open; edges to it form `E_J`.
    ArcJ,
    /// Pinned closed.
    Closed,
}

impl DiscreteTriplet {
    /// Builds a site-mode triplet directly from lattice sites: `interior`
    /// plus their neighbours, whose roles come from `classify`.
    pub fn from_sites(
        model: &PercolationModel,
        triplet_id: impl Into<String>,
        interior: impl IntoIterator<Item = SiteKey>,
        classify: impl Fn(SiteKey) -> Exterior,
    ) -> Result<Self> {
        if model.mode != Mode::Site {
            return Err(Error::InvalidArgument("site-defined triplets need a site model".into()));
        }
        let g = &model.graph;
        let region = Region::from_interior(g, interior);
        let n_int = region.interior_count();
        if n_int == 0 {
            return Err(Error::MeshTooCoarse("empty interior".into()));
        }
        let index: HashMap<SiteKey, u32> = region.sites.iter().enumerate().map(|(i, &k)| (k, i as u32)).collect();
        let positions: Vec<Point> = region.sites.iter().map(|&k| g.position(k)).collect();
        let edges: Vec<(u32, u32)> = region
            .edges
            .iter()
            .map(|&e| {
                let (a, b) = g.edge_ends(e);
                (index[&a], index[&b])
            })
            .collect();
        let n = region.sites.len();
        let mut roles = vec![Exterior::Free; n];
        let mut pinned_open = bitvec![0; n];
        let mut pinned_closed = bitvec![0; n];
        for i in n_int..n {
            roles[i] = classify(region.sites[i]);
            match roles[i] {
                Exterior::ArcI | Exterior::ArcJ => pinned_open.set(i, true),
                Exterior::Closed => pinned_closed.set(i, true),
                Exterior::Free => {}
            }
        }
        let arc = |want: Exterior| -> Vec<u32> {
            edges
                .iter()
                .enumerate()
                .filter(|(_, &(a, b))| roles[a as usize] == want || roles[b as usize] == want)
                .map(|(e, _)| e as u32)
                .collect()
        };
        let (e_i, e_j) = (arc(Exterior::ArcI), arc(Exterior::ArcJ));
        if e_i.is_empty() || e_j.is_empty() {
            return Err(Error::InvalidArcs("an arc has no edges".into()));
        }
        let mut deg = vec![0u32; n + 1];
        for &(a, b) in &edges {
            deg[a as usize + 1] += 1;
            deg[b as usize + 1] += 1;
        }
        for i in 1..deg.len() {
            deg[i] += deg[i - 1];
        }
        let adj_start = deg.clone();
        let mut fill = deg;
        let mut adj = vec![(0u32, 0u32); 2 * edges.len()];
        for (ei, &(a, b)) in edges.iter().enumerate() {
            adj[fill[a as usize] as usize] = (b, ei as u32);
            fill[a as usize] += 1;
            adj[fill[b as usize] as usize] = (a, ei as u32);
            fill[b as usize] += 1;
        }
        let mut j_marks = vec![false; n];
        for &e in &e_j {
            let (a, b) = edges[e as usize];
            j_marks[a as usize] = true;
            j_marks[b as usize] = true;
        }
        Ok(DiscreteTriplet {
            model: model.clone(),
            mode: Mode::Site,
            delta: g.mesh,
            triplet_id: triplet_id.into(),
            site_prob: region.sites.iter().map(|&k| model.site_prob(k)).collect(),
            edge_prob: Vec::new(),
            region,
            positions,
            edges,
            adj_start,
            adj,
            e_i,
            e_j,
            pinned_open,
            pinned_closed,
            j_marks,
        })
    }

    /// Index of a site in region order.
    pub fn site_index(&self, k: SiteKey) -> Option<usize> {
        let n = self.region.interior_count();
        self.region.sites[..n]
            .binary_search(&k)
            .ok()
            .or_else(|| self.region.sites[n..].binary_search(&k).ok().map(|i| i + n))
    }
}

struct Dsu {
    parent: Vec<u32>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu {
            parent: (0..n as u32).collect(),
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra as usize] = rb;
        }
    }
}

/// Reusable buffers for the lazy search.
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    known: Vec<u32>,
    open: Vec<bool>,
    seen: Vec<u32>,
    gen: u32,
    stack: Vec<u32>,
}

impl Scratch {
    fn reset(&mut self, n: usize) {
        if self.known.len() != n {
            self.known = vec![0; n];
            self.open = vec![false; n];
            self.seen = vec![0; n];
            self.gen = 0;
        }
        self.gen = self.gen.wrapping_add(1);
        if self.gen == 0 {
            self.known.iter_mut().for_each(|x| *x = 0);
            self.seen.iter_mut().for_each(|x| *x = 0);
            self.gen = 1;
        }
        self.stack.clear();
    }
}

impl DiscreteTriplet {
    pub fn n_sites(&self) -> usize {
        self.region.sites.len()
    }

    /// Number of statused variables: sites in site mode, edges in bond mode.
    pub fn n_variables(&self) -> usize {
        match self.mode {
            Mode::Site => self.n_sites(),
            Mode::Bond => self.edges.len(),
        }
    }

    #[inline]
    fn neighbours(&self, u: usize) -> &[(u32, u32)] {
        &self.adj[self.adj_start[u] as usize..self.adj_start[u + 1] as usize]
    }

    /// Status of site `i` in the sample with per-sample seed `s`.
    #[inline]
    pub fn site_open(&self, s: u64, i: usize) -> bool {
        !self.pinned_closed[i]
            && (self.pinned_open[i] || PercolationModel::site_uniform(s, self.region.sites[i]) < self.site_prob[i])
    }

    #[inline]
    pub fn edge_open(&self, s: u64, e: usize) -> bool {
        PercolationModel::edge_uniform(s, self.region.edges[e]) < self.edge_prob[e]
    }

    /// Full configuration of the sample with per-sample seed `s`.
    pub fn configuration(&self, s: u64) -> Configuration<'_> {
        let mut c = sample_configuration(&self.model, &self.region, s);
        if self.mode == Mode::Site {
            c.status |= &self.pinned_open;
            let keep = !self.pinned_closed.clone();
            c.status &= &keep;
        }
        c
    }

    /// Union-find decision on a full configuration.
    pub fn has_crossing_bits(&self, status: &BitSlice) -> bool {
        assert_eq!(
            status.len(),
            self.n_variables(),
            "configuration does not match the triplet"
        );
        let mut dsu = Dsu::new(self.n_sites());
        let open_site = |i: u32| {
            let i = i as usize;
            !self.pinned_closed[i] && (status[i] || self.pinned_open[i])
        };
        let live = |e: u32| -> bool {
            let (a, b) = self.edges[e as usize];
            match self.mode {
                Mode::Site => open_site(a) && open_site(b),
                Mode::Bond => status[e as usize],
            }
        };
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            if live(e as u32) {
                dsu.union(a, b);
            }
        }
        let mut roots: Vec<u32> = self
            .e_i
            .iter()
            .filter(|&&e| live(e))
            .map(|&e| dsu.find(self.edges[e as usize].0))
            .collect();
        roots.sort_unstable();
        self.e_j
            .iter()
            .filter(|&&e| live(e))
            .any(|&e| roots.binary_search(&dsu.find(self.edges[e as usize].0)).is_ok())
    }

    pub fn has_crossing(&self, config: &Configuration<'_>) -> bool {
        self.has_crossing_bits(&config.status)
    }

    /// Same decision as [`has_crossing`](Self::has_crossing) on the sample
    /// `s`, revealing only the cluster grown from `I`.
    pub fn crossing_lazy(&self, s: u64, scratch: &mut Scratch) -> bool {
        scratch.reset(self.n_sites());
        let gen = scratch.gen;
        match self.mode {
            Mode::Site => {
                let open = |i: usize, sc: &mut Scratch| {
                    if sc.known[i] != gen {
                        sc.known[i] = gen;
                        sc.open[i] = self.site_open(s, i);
                    }
                    sc.open[i]
                };
                for &e in &self.e_i {
                    let (a, b) = self.edges[e as usize];
                    if open(a as usize, scratch) && open(b as usize, scratch) {
                        for x in [a, b] {
                            if scratch.seen[x as usize] != gen {
                                scratch.seen[x as usize] = gen;
                                scratch.stack.push(x);
                            }
                        }
                    }
                }
                while let Some(u) = scratch.stack.pop() {
                    let u = u as usize;
                    if self.j_marks[u] {
                        for &e in &self.e_j {
                            let (a, b) = self.edges[e as usize];
                            let other = match (a as usize == u, b as usize == u) {
                                (true, _) => b,
                                (_, true) => a,
                                _ => continue,
                            };
                            if open(other as usize, scratch) {
                                return true;
                            }
                        }
                    }
                    for &(v, _) in self.neighbours(u) {
                        if scratch.seen[v as usize] != gen && open(v as usize, scratch) {
                            scratch.seen[v as usize] = gen;
                            scratch.stack.push(v);
                        }
                    }
                }
                false
            }
            Mode::Bond => {
                let j_open: Vec<bool> = self.e_j.iter().map(|&e| self.edge_open(s, e as usize)).collect();
                let hit = |u: usize| {
                    self.j_marks[u]
                        && self.e_j.iter().zip(&j_open).any(|(&e, &o)| {
                            let (a, b) = self.edges[e as usize];
                            o && (a as usize == u || b as usize == u)
                        })
                };
                for &e in &self.e_i {
                    if self.edge_open(s, e as usize) {
                        let (a, b) = self.edges[e as usize];
                        for x in [a, b] {
                            if scratch.seen[x as usize] != gen {
                                scratch.seen[x as usize] = gen;
                                scratch.stack.push(x);
                            }
                        }
                    }
                }
                while let Some(u) = scratch.stack.pop() {
                    let u = u as usize;
                    if hit(u) {
                        return true;
                    }
                    for &(v, e) in self.neighbours(u) {
                        if scratch.seen[v as usize] != gen && self.edge_open(s, e as usize) {
                            scratch.seen[v as usize] = gen;
                            scratch.stack.push(v);
                        }
                    }
                }
                false
            }
        }
    }

    /// Successes over the global sample indices `range`.
    pub fn count_crossings(&self, seed: u64, range: std::ops::Range<u64>) -> u64 {
        let mut scratch = Scratch::default();
        range
            .filter(|&k| self.crossing_lazy(rng::sample_seed(seed, k), &mut scratch))
            .count() as u64
    }

    fn estimate_from(&self, seed: u64, successes: u64, n: u64) -> CrossingEstimate {
        let p_hat = successes as f64 / n as f64;
        CrossingEstimate {
            p_hat,
            n_samples: n,
            successes,
            std_err: stats::binomial_se(p_hat, n),
            mesh: self.delta,
            model_id: self.model.id(),
            triplet_id: self.triplet_id.clone(),
            seed,
        }
    }

    pub fn estimate(&self, n_samples: u64, seed: u64) -> Result<CrossingEstimate> {
        if n_samples == 0 {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        Ok(self.estimate_from(seed, self.count_crossings(seed, 0..n_samples), n_samples))
    }

    /// Splits `0..n_samples` into `replicas` contiguous blocks run in
    /// parallel; the merged estimate equals the single-block one exactly.
    pub fn estimate_replicated(&self, n_samples: u64, seed: u64, replicas: usize) -> Result<CrossingEstimate> {
        if n_samples == 0 || replicas == 0 {
            return Err(Error::TooFewSamples {
                needed: 1,
                got: n_samples.min(replicas as u64) as usize,
            });
        }
        let r = replicas as u64;
        let parts: Vec<CrossingEstimate> = (0..r)
            .into_par_iter()
            .filter_map(|i| {
                let (lo, hi) = (n_samples * i / r, n_samples * (i + 1) / r);
                (hi > lo).then(|| self.estimate_from(seed, self.count_crossings(seed, lo..hi), hi - lo))
            })
            .collect();
        CrossingEstimate::merge_all(&parts)
    }

    /// Exact probability by summing over every configuration.
    pub fn exact_crossing_probability(&self) -> Result<f64> {
        const CAP: usize = 24;
        let nv = self.n_variables();
        if nv > CAP {
            return Err(Error::EnumerationTooLarge { size: nv, cap: CAP });
        }
        let probs: &[f64] = match self.mode {
            Mode::Site => &self.site_prob,
            Mode::Bond => &self.edge_prob,
        };
        let mut bits: BitVec = bitvec![0; nv];
        let mut total = 0.0;
        for mask in 0u64..1 << nv {
            let mut w = 1.0;
            for i in 0..nv {
                let o = mask >> i & 1 == 1;
                bits.set(i, o);
                let site = self.mode == Mode::Site;
                w *= if site && self.pinned_open[i] {
                    o as u8 as f64
                } else if site && self.pinned_closed[i] {
                    !o as u8 as f64
                } else if o {
                    probs[i]
                } else {
                    1.0 - probs[i]
                };
            }
            if w > 0.0 && self.has_crossing_bits(&bits) {
                total += w;
            }
        }
        Ok(total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingEstimate {
    pub p_hat: f64,
    pub n_samples: u64,
    pub successes: u64,
    pub std_err: f64,
    pub mesh: f64,
    pub model_id: String,
    pub triplet_id: String,
    pub seed: u64,
}

impl CrossingEstimate {
    /// Pools estimates of the same quantity by sample counts.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.model_id != other.model_id || self.triplet_id != other.triplet_id || self.mesh != other.mesh {
            return Err(Error::InvalidArgument(
                "merging estimates of different quantities".into(),
            ));
        }
        let n = self.n_samples + other.n_samples;
        let s = self.successes + other.successes;
        let p = s as f64 / n as f64;
        Ok(CrossingEstimate {
            p_hat: p,
            n_samples: n,
            successes: s,
            std_err: stats::binomial_se(p, n),
            ..self.clone()
        })
    }

    pub fn merge_all(parts: &[Self]) -> Result<Self> {
        let (first, rest) = parts.split_first().ok_or(Error::TooFewSamples { needed: 1, got: 0 })?;
        rest.iter().try_fold(first.clone(), |acc, p| acc.merge(p))
    }
}

pub fn estimate_crossing(
    model: &PercolationModel,
    triplet: &Triplet,
    delta: f64,
    n_samples: u64,
    seed: u64,
) -> Result<CrossingEstimate> {
    rasterize(triplet, model, delta)?.estimate(n_samples, seed)
}

/// Mesh giving `l` sites along the short side of the `r` rectangle.
pub fn rectangle_mesh(r: f64, l: u32) -> f64 {
    r.min(1.0) / l as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub r: f64,
    pub p: Option<f64>,
    pub l: u32,
    pub estimate: CrossingEstimate,
    pub lattice: LatticeKind,
    pub mode: Mode,
}

pub const SWEEP_CSV_HEADER: &str = "r,p,delta_or_L,n,p_hat,std_err,lattice,mode,seed";

impl SweepRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.r,
            self.p.map_or("class".to_string(), |p| p.to_string()),
            self.l,
            self.estimate.n_samples,
            self.estimate.p_hat,
            self.estimate.std_err,
            self.lattice,
            self.mode,
            self.estimate.seed
        )
    }
}

/// Crossing estimates of `r`-rectangles with `l` sites on the short side.
/// Row `i` uses the seed `hash(seed, i)`.
pub fn sweep_aspect(
    model: &PercolationModel,
    r_list: &[f64],
    l: u32,
    n_samples: u64,
    seed: u64,
    replicas: usize,
) -> Result<Vec<SweepRow>> {
    if r_list.is_empty() {
        return Err(Error::InvalidArgument("empty aspect-ratio list".into()));
    }
    let p = match model.open_prob {
        crate::lattice::OpenProb::Uniform(p) => Some(p),
        _ => None,
    };
    r_list
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let dt = rasterize(&Triplet::rectangle(r)?, model, rectangle_mesh(r, l))?;
            let estimate = dt.estimate_replicated(n_samples, rng::hash2(seed, i as u64), replicas)?;
            Ok(SweepRow {
                r,
                p,
                l,
                estimate,
                lattice: model.graph.kind,
                mode: model.mode,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniversalityRow {
    pub triplet_id: String,
    pub a: CrossingEstimate,
    pub b: CrossingEstimate,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniversalityReport {
    pub rows: Vec<UniversalityRow>,
    pub max_abs_z: f64,
}

/// z-scores between `π_{gA}` and `π_B` on each triplet at mesh `delta`.
pub fn universality_compare(
    model_a: &PercolationModel,
    model_b: &PercolationModel,
    g: &PlaneMap,
    triplets: &[Triplet],
    delta: f64,
    n_samples: u64,
    seed: u64,
) -> Result<UniversalityReport> {
    let ga = model_a.apply_map(g)?;
    let mut rows = Vec::new();
    for (i, t) in triplets.iter().enumerate() {
        let a = rasterize(t, &ga, delta)?.estimate(n_samples, rng::hash3(seed, i as u64, 0))?;
        let b = rasterize(t, model_b, delta)?.estimate(n_samples, rng::hash3(seed, i as u64, 1))?;
        let z = stats::z_score(a.p_hat, a.std_err, b.p_hat, b.std_err);
        rows.push(UniversalityRow {
            triplet_id: t.name.clone(),
            a,
            b,
            z,
        });
    }
    let max_abs_z = rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
    Ok(UniversalityReport { rows, max_abs_z })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshTable {
    pub rows: Vec<CrossingEstimate>,
    /// First-order extrapolation `δ → 0` from the two finest meshes. A
    /// diagnostic only; the existence of the limit is not assumed.
    pub richardson: Option<f64>,
}

pub fn mesh_sequence(
    model: &PercolationModel,
    triplet: &Triplet,
    deltas: &[f64],
    n_samples: u64,
    seed: u64,
) -> Result<MeshTable> {
    let mut rows = deltas
        .iter()
        .enumerate()
        .map(|(i, &d)| estimate_crossing(model, triplet, d, n_samples, rng::hash2(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| b.mesh.total_cmp(&a.mesh));
    let richardson = match rows.as_slice() {
        [.., a, b] if a.mesh != b.mesh => Some((a.mesh * b.p_hat - b.mesh * a.p_hat) / (a.mesh - b.mesh)),
        _ => None,
    };
    Ok(MeshTable { rows, richardson })
}
