//! From spins to loops, loop weights and loop samplers.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ising::{ExactIsing, SpinGraph};
use super::medial::{LoopCounts, TileDomain, TileState};
use crate::{rng, Error, Result};

/// Largest number of tiles the exact loop enumerator accepts.
pub const LOOP_ENUMERATION_CAP: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfiguration {
    pub tiles: Vec<TileState>,
    pub counts: LoopCounts,
}

impl LoopConfiguration {
    pub fn new(domain: &TileDomain, tiles: Vec<TileState>) -> Result<Self> {
        if tiles.len() != domain.n_tiles() {
            return Err(Error::InvalidTileDomain(format!(
                "{} tile states for {} tiles",
                tiles.len(),
                domain.n_tiles()
            )));
        }
        let counts = domain.counts(&tiles)?;
        Ok(LoopConfiguration { tiles, counts })
    }

    pub fn from_mask(domain: &TileDomain, mask: u64) -> Result<Self> {
        LoopConfiguration::new(domain, tiles_from_mask(domain.n_tiles(), mask))
    }
}

pub fn tiles_from_mask(n: usize, mask: u64) -> Vec<TileState> {
    (0..n)
        .map(|t| {
            if mask >> t & 1 == 1 {
                TileState::SeNw
            } else {
                TileState::SwNe
            }
        })
        .collect()
}

pub fn mask_of(tiles: &[TileState]) -> u64 {
    tiles
        .iter()
        .enumerate()
        .fold(0, |m, (t, s)| if *s == TileState::SeNw { m | 1 << t } else { m })
}

/// Spin graph on the spin corners of `domain`, one edge per tile in tile
/// order; spins joined through wired boundary arcs are fixed to `+1`.
pub fn domain_spin_graph(domain: &TileDomain) -> SpinGraph {
    let n = domain.spin_corners().len();
    let edges = (0..domain.n_tiles())
        .map(|t| {
            let (a, b) = domain.tile_spins(t);
            (a as u32, b as u32)
        })
        .collect();
    let mut fixed = vec![None; n];
    for s in domain.wired_spins() {
        fixed[s] = Some(1);
    }
    SpinGraph { n, edges, fixed }
}

/// Opposite-sign diagonals are cut; equal-sign diagonals are cut with
/// probability `e^{−2β}` from the tile's own uniform.
pub fn spins_to_loops(domain: &TileDomain, spins: &[i8], beta: f64, seed: u64) -> Result<LoopConfiguration> {
    let q = super::cut_probability(beta);
    let tiles = (0..domain.n_tiles())
        .map(|t| {
            let (a, b) = domain.tile_spins(t);
            let cut = spins[a] != spins[b] || rng::unit2(seed, t as u64) < q;
            domain.state_for(t, cut)
        })
        .collect();
    LoopConfiguration::new(domain, tiles)
}

/// Spin clusters joined by preserved diagonals, not counting the cluster
/// attached to the wired boundary.
pub fn free_clusters(domain: &TileDomain, tiles: &[TileState]) -> usize {
    let n = domain.spin_corners().len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let wired = domain.wired_spins();
    for w in wired.windows(2) {
        let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
        parent[a] = b;
    }
    for t in 0..domain.n_tiles() {
        if !domain.is_cut(t, tiles[t]) {
            let (a, b) = domain.tile_spins(t);
            let (a, b) = (find(&mut parent, a), find(&mut parent, b));
            parent[a] = b;
        }
    }
    let wired_root = wired.first().map(|&w| find(&mut parent, w));
    (0..n)
        .filter(|&i| find(&mut parent, i) == i && Some(i) != wired_root)
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopWeight {
    pub counts: LoopCounts,
    pub clusters: usize,
    /// `q^c p^d 2^k` with `k` free spin clusters.
    pub weight: f64,
    /// `(√2)^b`.
    pub critical: f64,
}

pub fn loop_weight(domain: &TileDomain, cfg: &LoopConfiguration, beta: f64) -> LoopWeight {
    let q = super::cut_probability(beta);
    let k = free_clusters(domain, &cfg.tiles);
    let LoopCounts { b, c, d } = cfg.counts;
    LoopWeight {
        counts: cfg.counts,
        clusters: k,
        weight: q.powi(c as i32) * (1.0 - q).powi(d as i32) * 2f64.powi(k as i32),
        critical: 2f64.sqrt().powi(b as i32),
    }
}

/// Law of the loop configuration obtained by drawing spins exactly and
/// then cutting tiles, with the coins summed out analytically. Keys are
/// tile masks as in [`tiles_from_mask`].
pub fn induced_loop_law(domain: &TileDomain, beta: f64) -> Result<BTreeMap<u64, f64>> {
    if domain.n_tiles() > LOOP_ENUMERATION_CAP {
        return Err(Error::EnumerationTooLarge {
            size: domain.n_tiles(),
            cap: LOOP_ENUMERATION_CAP,
        });
    }
    let q = super::cut_probability(beta);
    let ex = ExactIsing::new(domain_spin_graph(domain), beta, 0.0)?;
    let mut law = BTreeMap::new();
    let n = domain.n_tiles();
    for (m, &ps) in ex.probs.iter().enumerate() {
        let spins = ex.spins_of(m);
        let equal: Vec<usize> = (0..n)
            .filter(|&t| {
                let (a, b) = domain.tile_spins(t);
                spins[a] == spins[b]
            })
            .collect();
        for sub in 0..1u64 << equal.len() {
            let mut cut = vec![true; n];
            let mut p = ps;
            for (k, &t) in equal.iter().enumerate() {
                if sub >> k & 1 == 1 {
                    cut[t] = false;
                    p *= 1.0 - q;
                } else {
                    p *= q;
                }
            }
            let tiles: Vec<TileState> = (0..n).map(|t| domain.state_for(t, cut[t])).collect();
            *law.entry(mask_of(&tiles)).or_insert(0.0) += p;
        }
    }
    Ok(law)
}

/// Normalized `q^c p^d 2^k` over every tile assignment.
pub fn fk_loop_law(domain: &TileDomain, beta: f64) -> Result<BTreeMap<u64, f64>> {
    enumerate_law(domain, |cfg| loop_weight(domain, cfg, beta).weight)
}

/// Normalized `(√2)^b` over every tile assignment.
pub fn critical_loop_law(domain: &TileDomain) -> Result<BTreeMap<u64, f64>> {
    enumerate_law(domain, |cfg| 2f64.sqrt().powi(cfg.counts.b as i32))
}

fn enumerate_law(domain: &TileDomain, w: impl Fn(&LoopConfiguration) -> f64) -> Result<BTreeMap<u64, f64>> {
    let n = domain.n_tiles();
    if n > LOOP_ENUMERATION_CAP {
        return Err(Error::EnumerationTooLarge {
            size: n,
            cap: LOOP_ENUMERATION_CAP,
        });
    }
    let mut law = BTreeMap::new();
    let mut z = 0.0;
    for m in 0..1u64 << n {
        let x = w(&LoopConfiguration::from_mask(domain, m)?);
        z += x;
        law.insert(m, x);
    }
    law.values_mut().for_each(|v| *v /= z);
    Ok(law)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopMethod {
    ExactEnumeration,
    TileFlipMetropolis,
}

/// Single-tile-flip chain for the loop measure
/// `∝ q^c (p/√2)^d (√2)^b`, which is `(√2)^b` at `β_c`.
#[derive(Debug, Clone)]
pub struct LoopChain<'a> {
    pub domain: &'a TileDomain,
    pub tiles: Vec<TileState>,
    pub b: usize,
    log_cut_ratio: f64,
    rng: ChaCha8Rng,
    pub proposed: u64,
    pub accepted: u64,
}

impl<'a> LoopChain<'a> {
    /// Starts from every diagonal cut.
    pub fn new(domain: &'a TileDomain, beta: f64, seed: u64) -> Result<Self> {
        let tiles: Vec<TileState> = (0..domain.n_tiles()).map(|t| domain.state_for(t, true)).collect();
        let b = domain.counts(&tiles)?.b;
        let q = super::cut_probability(beta);
        Ok(LoopChain {
            domain,
            tiles,
            b,
            // weight(preserved)/weight(cut) for one tile, loops aside
            log_cut_ratio: ((1.0 - q) / (2f64.sqrt() * q)).ln(),
            rng: rng::stream(seed, 0x100b),
            proposed: 0,
            accepted: 0,
        })
    }

    pub fn flip_once(&mut self) {
        let n = self.tiles.len();
        let t = self.rng.random_range(0..n);
        let db = self.domain.flip_delta(&self.tiles, t);
        let to_preserved = self.domain.is_cut(t, self.tiles[t]);
        let mut log_r = db as f64 * std::f64::consts::LN_2 / 2.0;
        log_r += if to_preserved {
            self.log_cut_ratio
        } else {
            -self.log_cut_ratio
        };
        self.proposed += 1;
        if log_r >= 0.0 || self.rng.random::<f64>() < log_r.exp() {
            self.tiles[t] = self.tiles[t].flipped();
            self.b = (self.b as i64 + db as i64) as usize;
            self.accepted += 1;
        }
    }

    pub fn sweep(&mut self) {
        for _ in 0..self.tiles.len() {
            self.flip_once();
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.proposed.max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopEnsembleSummary {
    pub method: LoopMethod,
    pub n_samples: usize,
    pub b_histogram: BTreeMap<usize, usize>,
    pub acceptance_rate: Option<f64>,
}

/// Draws `n` configurations from the critical measure `∝ (√2)^b`. The
/// chain records one configuration per sweep after `burn_in` sweeps.
pub fn sample_critical_loops(
    domain: &TileDomain,
    n: usize,
    seed: u64,
    method: LoopMethod,
    burn_in: usize,
) -> Result<(Vec<LoopConfiguration>, LoopEnsembleSummary)> {
    let mut out = Vec::with_capacity(n);
    let mut acceptance = None;
    match method {
        LoopMethod::ExactEnumeration => {
            let law = critical_loop_law(domain)?;
            let (masks, cdf): (Vec<u64>, Vec<f64>) = law
                .iter()
                .scan(0.0, |acc, (m, p)| {
                    *acc += p;
                    Some((*m, *acc))
                })
                .unzip();
            let mut g = rng::stream(seed, 0xe1);
            for _ in 0..n {
                let u: f64 = g.random::<f64>() * cdf[cdf.len() - 1];
                let k = cdf.partition_point(|&c| c <= u).min(masks.len() - 1);
                out.push(LoopConfiguration::from_mask(domain, masks[k])?);
            }
        }
        LoopMethod::TileFlipMetropolis => {
            let mut chain = LoopChain::new(domain, super::critical_beta(), seed)?;
            for _ in 0..burn_in {
                chain.sweep();
            }
            for _ in 0..n {
                chain.sweep();
                out.push(LoopConfiguration::new(domain, chain.tiles.clone())?);
            }
            acceptance = Some(chain.acceptance_rate());
        }
    }
    let mut b_histogram = BTreeMap::new();
    for c in &out {
        *b_histogram.entry(c.counts.b).or_insert(0) += 1;
    }
    Ok((
        out,
        LoopEnsembleSummary {
            method,
            n_samples: n,
            b_histogram,
            acceptance_rate: acceptance,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fk_ising::{critical_beta, LoopBoundary};

    fn max_diff(a: &BTreeMap<u64, f64>, b: &BTreeMap<u64, f64>) -> f64 {
        a.iter()
            .map(|(k, v)| (v - b.get(k).copied().unwrap_or(0.0)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn degenerate_spin_patterns() {
        let dom = TileDomain::new(3, 2, LoopBoundary::Free).unwrap();
        let n = dom.spin_corners().len();
        // β large enough that q underflows: every equal diagonal preserved
        let all_up = spins_to_loops(&dom, &vec![1; n], 400.0, 1).unwrap();
        assert_eq!(all_up.counts.d, dom.n_tiles());
        // one cluster with one inner face: b = 2k + d − V
        assert_eq!(all_up.counts.b as i64, 2 + dom.n_tiles() as i64 - n as i64);
        // diagonals change x by one, so colouring by x makes every pair opposite
        let checker: Vec<i8> = dom
            .spin_corners()
            .iter()
            .map(|&(x, _)| if x % 2 == 0 { 1 } else { -1 })
            .collect();
        let cfg = spins_to_loops(&dom, &checker, 0.3, 1).unwrap();
        assert_eq!((cfg.counts.c, cfg.counts.d), (dom.n_tiles(), 0));
    }

    #[test]
    fn fk_equivalence_on_small_domains() {
        for dom in [
            TileDomain::new(2, 2, LoopBoundary::Free).unwrap(),
            TileDomain::new(2, 4, LoopBoundary::Free).unwrap(),
            TileDomain::new(2, 4, LoopBoundary::Wired).unwrap(),
            TileDomain::chordal_rect(2, 4).unwrap(),
            TileDomain::chordal_rect(3, 2).unwrap(),
        ] {
            for beta in [0.2, critical_beta(), 0.9] {
                let induced = induced_loop_law(&dom, beta).unwrap();
                let fk = fk_loop_law(&dom, beta).unwrap();
                assert!(max_diff(&induced, &fk) < 1e-12, "{:?} β={beta}", dom.boundary);
            }
            let crit = critical_loop_law(&dom).unwrap();
            let fk = fk_loop_law(&dom, critical_beta()).unwrap();
            assert!(max_diff(&crit, &fk) < 1e-12, "{:?}", dom.boundary);
        }
    }

    #[test]
    fn metropolis_marginals_match_enumeration() {
        let dom = TileDomain::chordal_rect(2, 2).unwrap();
        let law = critical_loop_law(&dom).unwrap();
        let (cfgs, summary) = sample_critical_loops(&dom, 200_000, 4, LoopMethod::TileFlipMetropolis, 100).unwrap();
        assert!(summary.acceptance_rate.unwrap() > 0.0);
        let n = cfgs.len() as f64;
        for (m, p) in law {
            let hits = cfgs.iter().filter(|c| mask_of(&c.tiles) == m).count() as f64;
            // sweeps of four flips are close to independent here
            let se = (p * (1.0 - p) / n).sqrt() * 2.0;
            assert!((hits / n - p).abs() < 4.0 * se + 1e-9, "mask {m}: {} vs {p}", hits / n);
        }
    }
}
