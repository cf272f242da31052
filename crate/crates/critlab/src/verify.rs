//! Regression fixtures and brute-force oracles.

use std::path::{Path, PathBuf};

use bitvec::prelude::*;
use serde::{Deserialize, Serialize};

use critlab_core::cardy::cardy;
use critlab_core::crossing::{rasterize, ArcPoint, BoundaryArc, DiscreteTriplet, Triplet};
use critlab_core::exploration::{crossing_by_exploration, BoundaryCondition, Cell, HexDomain};
use critlab_core::fk_ising::loops::{critical_loop_law, fk_loop_law, induced_loop_law};
use critlab_core::fk_ising::observable::{discrete_cr_residual, exact_observable};
use critlab_core::fk_ising::{critical_beta, LoopBoundary, TileDomain};
use critlab_core::lattice::{sample_configuration, LatticeKind, Mode, PercolationModel};

use crate::error::{HarnessError, Result};

pub const FIXTURE_FILES: [&str; 6] = [
    "fig1_square.json",
    "fig5_left.json",
    "fig5_right.json",
    "all_open.json",
    "fig8_loops.json",
    "fig10_windings.json",
];

pub fn default_fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn lines(&self) -> String {
        self.checks
            .iter()
            .map(|c| format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail))
            .collect()
    }

    fn push(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    fn push_result(&mut self, name: &str, r: Result<(bool, String)>) {
        match r {
            Ok((ok, d)) => self.push(name, ok, d),
            Err(e) => self.push(name, false, format!("error: {e}")),
        }
    }
}

/// Open sites of a square-lattice picture: `#` open, anything else closed.
#[derive(Debug, Clone, Deserialize)]
pub struct SquareFixture {
    pub description: String,
    /// Sites per unit length; the domain is the unit square and the
    /// picture covers the sites `0..=inverse_mesh` in both directions.
    pub inverse_mesh: u32,
    pub rows_top_down: Vec<String>,
    pub expect_bottom_top: bool,
    pub expect_left_right: bool,
}

#[derive(Debug, Clone, Deserialize)]
pub struct HexFixture {
    pub description: String,
    pub cols: i64,
    pub rows: i64,
    /// Cell rows from `j = rows − 1` down to `j = 0`; `#` open.
    pub rows_top_down: Vec<String>,
    pub expect_crossing: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PercolationFixture {
    SquareSite(SquareFixture),
    HexCorner(HexFixture),
}

#[derive(Debug, Clone, Deserialize)]
pub struct LoopFixture {
    pub description: String,
    pub width: usize,
    pub height: usize,
    pub boundary: LoopBoundary,
    pub rows_top_down: Vec<String>,
    #[serde(default)]
    pub expected: Option<ExpectedCounts>,
    #[serde(default)]
    pub sides: Vec<SideWinding>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
pub struct ExpectedCounts {
    pub b: usize,
    pub c: usize,
    pub d: usize,
}

/// Winding from `b` in quarter turns at the side whose midpoint is `(x, y)`.
#[derive(Debug, Clone, Copy, Deserialize)]
pub struct SideWinding {
    pub x: f64,
    pub y: f64,
    pub winding: i32,
}

fn load<T: for<'de> Deserialize<'de>>(dir: &Path, name: &str) -> Result<T> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(HarnessError::MissingFixture(path));
    }
    let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn picture_cell(rows: &[String], col: i64, row_from_bottom: i64) -> Option<bool> {
    let h = rows.len() as i64;
    if row_from_bottom < 0 || row_from_bottom >= h || col < 0 {
        return None;
    }
    rows[(h - 1 - row_from_bottom) as usize]
        .chars()
        .nth(col as usize)
        .map(|c| c == '#')
}

/// Unit square with `I` the left side and `J` the right side.
fn left_right_square() -> Result<Triplet> {
    Ok(Triplet::new(
        "square-left-right",
        vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        BoundaryArc {
            start: ArcPoint { edge: 3, t: 0.0 },
            end: ArcPoint { edge: 3, t: 1.0 },
        },
        BoundaryArc {
            start: ArcPoint { edge: 1, t: 0.0 },
            end: ArcPoint { edge: 1, t: 1.0 },
        },
    )?)
}

/// Statuses of `dt`'s sites read off a picture whose bottom-left entry is
/// the site `(0, 0)`.
fn square_status(dt: &DiscreteTriplet, rows: &[String]) -> BitVec {
    dt.region
        .sites
        .iter()
        .map(|k| picture_cell(rows, k.m, k.n).unwrap_or(false))
        .collect()
}

fn check_square(f: &SquareFixture) -> Result<(bool, String)> {
    let n = f.inverse_mesh as i64;
    let delta = 1.0 / f.inverse_mesh as f64;
    let model = PercolationModel::homogeneous(LatticeKind::Square, Mode::Site, 0.5)?;
    let size = (n + 1) as usize;
    if f.rows_top_down.len() != size || f.rows_top_down.iter().any(|r| r.chars().count() != size) {
        return Ok((false, format!("picture must be {size}x{size}")));
    }
    let bt = rasterize(&Triplet::rectangle(1.0)?, &model, delta)?;
    let lr = rasterize(&left_right_square()?, &model, delta)?;
    let interior = bt.region.interior.iter().filter(|x| **x).count();
    if interior != (size - 2) * (size - 2) {
        return Ok((
            false,
            format!("{interior} interior sites, expected {}", (size - 2) * (size - 2)),
        ));
    }
    let got_bt = bt.has_crossing_bits(&square_status(&bt, &f.rows_top_down));
    let got_lr = lr.has_crossing_bits(&square_status(&lr, &f.rows_top_down));
    Ok((
        got_bt == f.expect_bottom_top && got_lr == f.expect_left_right,
        format!(
            "bottom-top {got_bt} (want {}), left-right {got_lr} (want {})",
            f.expect_bottom_top, f.expect_left_right
        ),
    ))
}

fn check_hex(f: &HexFixture) -> Result<(bool, String)> {
    let domain = HexDomain::new(f.cols, f.rows, BoundaryCondition::Corner)?;
    let model = PercolationModel::homogeneous(LatticeKind::Triangular, Mode::Site, 0.5)?;
    let dt = domain.discrete_triplet(&model)?;
    let mut config = sample_configuration(&dt.model, &dt.region, 0);
    for (i, k) in dt.region.sites.iter().enumerate() {
        let c = Cell::from_site(*k);
        let open = match picture_cell(&f.rows_top_down, c.i, c.j) {
            Some(v) if c.i < f.cols => v,
            _ => false,
        };
        config.status.set(i, open);
    }
    let union_find = dt.has_crossing(&config);
    let exploration = crossing_by_exploration(&config, &dt, &domain)?;
    Ok((
        union_find == f.expect_crossing && exploration == f.expect_crossing,
        format!(
            "union-find {union_find}, exploration {exploration}, want {}",
            f.expect_crossing
        ),
    ))
}

fn check_loops(f: &LoopFixture) -> Result<(bool, String)> {
    let domain = TileDomain::new(f.width, f.height, f.boundary)?;
    let tiles = domain.parse_tiles(&f.rows_top_down)?;
    let mut ok = true;
    let mut detail = vec![];
    if let Some(e) = f.expected {
        let got = domain.counts(&tiles)?;
        ok &= (got.b, got.c, got.d) == (e.b, e.c, e.d);
        detail.push(format!(
            "(b, c, d) = ({}, {}, {}), want ({}, {}, {})",
            got.b, got.c, got.d, e.b, e.c, e.d
        ));
    }
    if !f.sides.is_empty() {
        let visits = domain.trajectory_from_b(&tiles)?;
        for s in &f.sides {
            let side = domain.side_at(s.x, s.y);
            let got = side
                .and_then(|sd| visits.iter().find(|v| v.side == sd))
                .map(|v| v.winding);
            ok &= got == Some(s.winding);
            detail.push(format!("w({}, {}) = {:?}, want {}", s.x, s.y, got, s.winding));
        }
    }
    Ok((ok, detail.join("; ")))
}

/// Every configuration of a corner hexagon domain: exploration against
/// union-find.
pub fn exhaustive_exploration(cols: i64, rows: i64) -> Result<(u64, u64)> {
    let domain = HexDomain::new(cols, rows, BoundaryCondition::Corner)?;
    let model = PercolationModel::homogeneous(LatticeKind::Triangular, Mode::Site, 0.5)?;
    let dt = domain.discrete_triplet(&model)?;
    let free: Vec<usize> = (0..dt.n_sites())
        .filter(|&i| !dt.pinned_open[i] && !dt.pinned_closed[i])
        .collect();
    let mut config = sample_configuration(&dt.model, &dt.region, 0);
    let mut mismatches = 0;
    let total = 1u64 << free.len();
    for mask in 0..total {
        for (b, &i) in free.iter().enumerate() {
            config.status.set(i, mask >> b & 1 == 1);
        }
        if dt.has_crossing(&config) != crossing_by_exploration(&config, &dt, &domain)? {
            mismatches += 1;
        }
    }
    Ok((total, mismatches))
}

fn max_diff(a: &std::collections::BTreeMap<u64, f64>, b: &std::collections::BTreeMap<u64, f64>) -> f64 {
    a.iter()
        .map(|(k, v)| (v - b.get(k).copied().unwrap_or(0.0)).abs())
        .chain(b.iter().filter(|(k, _)| !a.contains_key(k)).map(|(_, v)| v.abs()))
        .fold(0.0, f64::max)
}

fn fk_oracle() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for dom in [
        TileDomain::new(2, 4, LoopBoundary::Free)?,
        TileDomain::new(2, 4, LoopBoundary::Wired)?,
        TileDomain::chordal_rect(2, 4)?,
    ] {
        for beta in [0.3, critical_beta(), 1.0] {
            worst = worst.max(max_diff(&induced_loop_law(&dom, beta)?, &fk_loop_law(&dom, beta)?));
        }
        worst = worst.max(max_diff(
            &critical_loop_law(&dom)?,
            &fk_loop_law(&dom, critical_beta())?,
        ));
    }
    Ok((
        worst < 1e-10,
        format!("max law difference {worst:.2e} on 8-tile domains"),
    ))
}

fn exact_cr_oracle() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for (w, h) in [(4, 2), (3, 4), (4, 4)] {
        let dom = TileDomain::chordal_rect(w, h)?;
        let f = exact_observable(&dom)?;
        worst = worst.max(discrete_cr_residual(&dom, &f).max);
    }
    Ok((worst < 1e-12, format!("max residual {worst:.2e}")))
}

/// Runs every fixture in `dir` and the brute-force oracles.
pub fn verify(dir: &Path) -> Result<Report> {
    for name in FIXTURE_FILES {
        if !dir.join(name).is_file() {
            return Err(HarnessError::MissingFixture(dir.join(name)));
        }
    }
    let mut report = Report { checks: vec![] };
    for name in ["fig1_square.json", "fig5_left.json", "fig5_right.json", "all_open.json"] {
        let r = load::<PercolationFixture>(dir, name).and_then(|f| match f {
            PercolationFixture::SquareSite(s) => check_square(&s),
            PercolationFixture::HexCorner(h) => check_hex(&h),
        });
        report.push_result(name, r);
    }
    for name in ["fig8_loops.json", "fig10_windings.json"] {
        let r = load::<LoopFixture>(dir, name).and_then(|f| check_loops(&f));
        report.push_result(name, r);
    }
    report.push_result(
        "exploration-equivalence-4x4",
        exhaustive_exploration(4, 4).map(|(n, bad)| (bad == 0, format!("{bad} mismatches in {n} configurations"))),
    );
    report.push_result(
        "exploration-equivalence-6x2",
        exhaustive_exploration(6, 2).map(|(n, bad)| (bad == 0, format!("{bad} mismatches in {n} configurations"))),
    );
    report.push_result("fk-equivalence", fk_oracle());
    report.push_result("exact-observable-holomorphic", exact_cr_oracle());
    report.push_result(
        "cardy-square",
        cardy(1.0)
            .map(|c| ((c - 0.5).abs() < 1e-9, format!("cardy(1) = {c}")))
            .map_err(Into::into),
    );
    Ok(report)
}
