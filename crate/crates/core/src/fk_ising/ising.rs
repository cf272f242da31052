//! Nearest-neighbour Ising spins on a finite graph.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{rng, Error, Result};

/// Largest number of free spins the exact enumerator accepts.
pub const ENUMERATION_CAP: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinGraph {
    pub n: usize,
    pub edges: Vec<(u32, u32)>,
    /// Boundary spins held at a fixed sign.
    pub fixed: Vec<Option<i8>>,
}

impl SpinGraph {
    /// `rows × cols` grid with free boundary; spin `(i, j)` has index
    /// `i·cols + j`.
    pub fn grid(rows: usize, cols: usize) -> Self {
        let idx = |i: usize, j: usize| (i * cols + j) as u32;
        let mut edges = Vec::new();
        for i in 0..rows {
            for j in 0..cols {
                if j + 1 < cols {
                    edges.push((idx(i, j), idx(i, j + 1)));
                }
                if i + 1 < rows {
                    edges.push((idx(i, j), idx(i + 1, j)));
                }
            }
        }
        SpinGraph {
            n: rows * cols,
            edges,
            fixed: vec![None; rows * cols],
        }
    }

    pub fn free_spins(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.fixed[i].is_none()).collect()
    }

    fn adjacency(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
        adj
    }

    /// `−E/kT = β Σ σσ' + h Σ σ`.
    pub fn log_weight(&self, spins: &[i8], beta: f64, h: f64) -> f64 {
        let bond: i64 = self
            .edges
            .iter()
            .map(|&(a, b)| (spins[a as usize] * spins[b as usize]) as i64)
            .sum();
        let field: i64 = spins.iter().map(|&s| s as i64).sum();
        beta * bond as f64 + h * field as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinConfiguration {
    pub spins: Vec<i8>,
    pub beta: f64,
    pub h: f64,
}

/// Full probability table over the free spins.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactIsing {
    pub graph: SpinGraph,
    pub beta: f64,
    pub h: f64,
    free: Vec<usize>,
    /// Probability of each assignment of the free spins, bit `k` of the
    /// index set meaning spin `free[k]` is −1.
    pub probs: Vec<f64>,
    pub log_z: f64,
}

impl ExactIsing {
    pub fn new(graph: SpinGraph, beta: f64, h: f64) -> Result<Self> {
        let free = graph.free_spins();
        if free.len() > ENUMERATION_CAP {
            return Err(Error::EnumerationTooLarge {
                size: free.len(),
                cap: ENUMERATION_CAP,
            });
        }
        let mut spins: Vec<i8> = graph.fixed.iter().map(|f| f.unwrap_or(1)).collect();
        let logs: Vec<f64> = (0..1usize << free.len())
            .map(|m| {
                for (k, &i) in free.iter().enumerate() {
                    spins[i] = if m >> k & 1 == 1 { -1 } else { 1 };
                }
                graph.log_weight(&spins, beta, h)
            })
            .collect();
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logs.iter().map(|l| (l - top).exp()).sum();
        let probs = logs.iter().map(|l| (l - top).exp() / z).collect();
        Ok(ExactIsing {
            graph,
            beta,
            h,
            free,
            probs,
            log_z: top + z.ln(),
        })
    }

    pub fn spins_of(&self, m: usize) -> Vec<i8> {
        let mut s: Vec<i8> = self.graph.fixed.iter().map(|f| f.unwrap_or(1)).collect();
        for (k, &i) in self.free.iter().enumerate() {
            s[i] = if m >> k & 1 == 1 { -1 } else { 1 };
        }
        s
    }

    pub fn expectation(&self, f: impl Fn(&[i8]) -> f64) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(m, p)| p * f(&self.spins_of(m)))
            .sum()
    }
}

pub fn magnetization(s: &[i8]) -> f64 {
    s.iter().map(|&x| x as f64).sum::<f64>() / s.len() as f64
}

/// Mean of `σσ'` over the edges of `g`.
pub fn bond_correlation(g: &SpinGraph, s: &[i8]) -> f64 {
    g.edges
        .iter()
        .map(|&(a, b)| (s[a as usize] * s[b as usize]) as f64)
        .sum::<f64>()
        / g.edges.len().max(1) as f64
}

/// Single-spin-flip Metropolis chain.
#[derive(Debug, Clone)]
pub struct Metropolis {
    pub graph: SpinGraph,
    pub beta: f64,
    pub h: f64,
    pub spins: Vec<i8>,
    adj: Vec<Vec<u32>>,
    free: Vec<usize>,
    rng: ChaCha8Rng,
    pub proposed: u64,
    pub accepted: u64,
}

impl Metropolis {
    /// Starts from all `+1` on the free spins.
    pub fn new(graph: SpinGraph, beta: f64, h: f64, seed: u64) -> Self {
        let spins = graph.fixed.iter().map(|f| f.unwrap_or(1)).collect();
        Metropolis {
            adj: graph.adjacency(),
            free: graph.free_spins(),
            graph,
            beta,
            h,
            spins,
            rng: rng::stream(seed, 0x15),
            proposed: 0,
            accepted: 0,
        }
    }

    /// One sweep: as many proposals as free spins, sites chosen uniformly.
    pub fn sweep(&mut self) {
        if self.free.is_empty() {
            return;
        }
        for _ in 0..self.free.len() {
            let i = self.free[self.rng.random_range(0..self.free.len())];
            let s = self.spins[i] as f64;
            let local: f64 = self.adj[i].iter().map(|&j| self.spins[j as usize] as f64).sum();
            let d_log = -2.0 * s * (self.beta * local + self.h);
            self.proposed += 1;
            if d_log >= 0.0 || self.rng.random::<f64>() < d_log.exp() {
                self.spins[i] = -self.spins[i];
                self.accepted += 1;
            }
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.proposed.max(1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_spins_by_hand() {
        let beta = 0.37;
        let ex = ExactIsing::new(SpinGraph::grid(1, 2), beta, 0.0).unwrap();
        let z = 2.0 * beta.exp() + 2.0 * (-beta).exp();
        for m in 0..4 {
            let s = ex.spins_of(m);
            let want = if s[0] == s[1] {
                beta.exp() / z
            } else {
                (-beta).exp() / z
            };
            assert!((ex.probs[m] - want).abs() < 1e-15);
        }
        assert!((ex.log_z - z.ln()).abs() < 1e-14);
    }

    #[test]
    fn temperature_limits() {
        let ex = ExactIsing::new(SpinGraph::grid(2, 3), 0.0, 0.0).unwrap();
        assert!(ex.probs.iter().all(|p| (p - 1.0 / 64.0).abs() < 1e-15));
        let ex = ExactIsing::new(SpinGraph::grid(2, 3), 50.0, 0.0).unwrap();
        assert!((ex.probs[0] + ex.probs[63] - 1.0).abs() < 1e-12);
        assert!(ExactIsing::new(SpinGraph::grid(3, 7), 0.1, 0.0).is_err());
    }

    #[test]
    fn metropolis_matches_enumeration() {
        let g = SpinGraph::grid(2, 2);
        let beta = 0.44;
        let ex = ExactIsing::new(g.clone(), beta, 0.1).unwrap();
        let m_exact = ex.expectation(magnetization);
        let c_exact = ex.expectation(|s| bond_correlation(&g, s));
        let mut mc = Metropolis::new(g.clone(), beta, 0.1, 3);
        let n = 1_000_000;
        let (mut ms, mut cs) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..1000 {
            mc.sweep();
        }
        for _ in 0..n {
            mc.sweep();
            ms.push(magnetization(&mc.spins));
            cs.push(bond_correlation(&g, &mc.spins));
        }
        for (xs, want) in [(ms, m_exact), (cs, c_exact)] {
            let mean = crate::stats::mean(&xs);
            let se = batch_se(&xs, 200);
            assert!((mean - want).abs() < 4.0 * se, "{mean} vs {want} (se {se})");
        }
    }

    pub(crate) fn batch_se(xs: &[f64], batches: usize) -> f64 {
        let k = xs.len() / batches;
        let means: Vec<f64> = xs.chunks(k).take(batches).map(crate::stats::mean).collect();
        (crate::stats::variance(&means) / batches as f64).sqrt()
    }
}
