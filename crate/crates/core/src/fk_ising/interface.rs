//! Spin interfaces of the critical Ising model on hexagon cells.
//!
//! Cells are the sites of the triangular lattice. The chordal boundary
//! arcs of a [`HexDomain`] fix the outside spins (`+` on the open arc,
//! `−` on the closed arc), and the exploration path separating `+` from
//! `−` runs from `a` to `b`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::exploration::{explore_with, path_driving, BoundaryCondition, Cell, ExplorationPath, HexDomain};
use crate::loewner::DrivingFunction;
use crate::{rng, Error, Result};

/// `β_c = ln 3 / 4` for the triangular lattice.
pub fn triangular_critical_beta() -> f64 {
    3f64.ln() / 4.0
}

const OUT: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct HexIsing {
    pub domain: HexDomain,
    pub beta: f64,
    pub spins: Vec<i8>,
    nbrs: Vec<[u32; 6]>,
    /// Sum of the fixed outside spins next to each cell.
    field: Vec<i8>,
    /// `P(+)` indexed by local field + 6.
    p_plus: [f64; 13],
    rng: ChaCha8Rng,
}

impl HexIsing {
    /// Starts from the split configuration matching the boundary arcs.
    pub fn new(domain: HexDomain, beta: f64, seed: u64) -> Result<Self> {
        if domain.bc != BoundaryCondition::Chordal {
            return Err(Error::InvalidArgument("spin interfaces need the chordal rule".into()));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta = {beta}")));
        }
        let idx = |c: Cell| (c.j * domain.cols + c.i) as u32;
        let mut nbrs = Vec::with_capacity(domain.len());
        let mut field = Vec::with_capacity(domain.len());
        let mut spins = Vec::with_capacity(domain.len());
        for c in domain.cells() {
            let mut nb = [OUT; 6];
            let mut f = 0i8;
            for (k, n) in c.neighbors().into_iter().enumerate() {
                match domain.boundary_color(n) {
                    None => nb[k] = idx(n),
                    Some(true) => f += 1,
                    Some(false) => f -= 1,
                }
            }
            nbrs.push(nb);
            field.push(f);
            spins.push(if c.center()[0] > domain.x_mark() { 1 } else { -1 });
        }
        let mut p_plus = [0.0; 13];
        for (h, p) in p_plus.iter_mut().enumerate() {
            *p = 1.0 / (1.0 + (-2.0 * beta * (h as f64 - 6.0)).exp());
        }
        Ok(HexIsing {
            domain,
            beta,
            spins,
            nbrs,
            field,
            p_plus,
            rng: rng::stream(seed, 0x1f5),
        })
    }

    /// One heat-bath sweep in cell order.
    pub fn sweep(&mut self) {
        for i in 0..self.spins.len() {
            let mut h = self.field[i] as i32;
            for &n in &self.nbrs[i] {
                if n != OUT {
                    h += self.spins[n as usize] as i32;
                }
            }
            let p = self.p_plus[(h + 6) as usize];
            self.spins[i] = if self.rng.random::<f64>() < p { 1 } else { -1 };
        }
    }

    pub fn spin(&self, c: Cell) -> i8 {
        self.spins[(c.j * self.domain.cols + c.i) as usize]
    }

    /// The `+`/`−` interface from `a` to `b`.
    pub fn interface(&self) -> Result<ExplorationPath> {
        explore_with(&self.domain, |c| self.spin(c) > 0)
    }

    /// `−Σ σ_x σ_y` over domain pairs and pairs with fixed outside cells.
    pub fn energy(&self) -> i64 {
        let mut e = 0i64;
        for (i, nb) in self.nbrs.iter().enumerate() {
            let s = self.spins[i] as i64;
            e -= s * self.field[i] as i64;
            for &n in nb {
                if n != OUT && (n as usize) > i {
                    e -= s * self.spins[n as usize] as i64;
                }
            }
        }
        e
    }

    pub fn magnetization(&self) -> f64 {
        self.spins.iter().map(|&s| s as f64).sum::<f64>() / self.spins.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InterfacePlan {
    pub chains: usize,
    pub burn_in_sweeps: usize,
    pub curves_per_chain: usize,
    /// Sweeps between recorded curves of one chain.
    pub spacing_sweeps: usize,
}

/// Interfaces from independent heat-bath chains, in chain order.
pub fn sample_interfaces(
    domain: &HexDomain,
    beta: f64,
    plan: InterfacePlan,
    seed: u64,
) -> Result<Vec<ExplorationPath>> {
    let per_chain: Vec<Vec<ExplorationPath>> = (0..plan.chains)
        .into_par_iter()
        .map(|c| {
            let mut m = HexIsing::new(*domain, beta, rng::hash2(seed, c as u64))?;
            for _ in 0..plan.burn_in_sweeps {
                m.sweep();
            }
            let mut out = Vec::with_capacity(plan.curves_per_chain);
            for k in 0..plan.curves_per_chain {
                if k > 0 {
                    for _ in 0..plan.spacing_sweeps {
                        m.sweep();
                    }
                }
                out.push(m.interface()?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_chain.into_iter().flatten().collect())
}

/// Driving functions of sampled interfaces, with the total zipper skips.
pub fn interface_drivings(
    domain: &HexDomain,
    paths: &[ExplorationPath],
    n_points: usize,
) -> Result<(Vec<DrivingFunction>, usize)> {
    let res: Vec<(DrivingFunction, usize)> = paths
        .par_iter()
        .map(|p| path_driving(p, domain, n_points))
        .collect::<Result<_>>()?;
    let skipped = res.iter().map(|r| r.1).sum();
    Ok((res.into_iter().map(|r| r.0).collect(), skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exploration::StopCause;

    fn dom() -> HexDomain {
        HexDomain::new(12, 14, BoundaryCondition::Chordal).unwrap()
    }

    #[test]
    fn critical_point() {
        assert!(((4.0 * triangular_critical_beta()).exp() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn frozen_and_hot_limits() {
        // β = 0: independent fair spins
        let mut m = HexIsing::new(dom(), 0.0, 1).unwrap();
        let mut acc = 0.0;
        for _ in 0..400 {
            m.sweep();
            acc += m.magnetization();
        }
        assert!((acc / 400.0).abs() < 0.02);
        // large β stays in the ground states of the split start
        let mut m = HexIsing::new(dom(), 20.0, 1).unwrap();
        let e0 = m.energy();
        let mut hot = HexIsing::new(dom(), 0.0, 2).unwrap();
        hot.sweep();
        assert!(hot.energy() > e0);
        for _ in 0..20 {
            m.sweep();
            assert_eq!(m.energy(), e0);
        }
        let path = m.interface().unwrap();
        assert_eq!(path.stop_cause, StopCause::Exhausted);
    }

    #[test]
    fn interfaces_run_from_a_to_b() {
        let plan = InterfacePlan {
            chains: 3,
            burn_in_sweeps: 50,
            curves_per_chain: 2,
            spacing_sweeps: 10,
        };
        let paths = sample_interfaces(&dom(), triangular_critical_beta(), plan, 5).unwrap();
        assert_eq!(paths.len(), 6);
        let again = sample_interfaces(&dom(), triangular_critical_beta(), plan, 5).unwrap();
        assert_eq!(paths, again);
        let (drivings, _) = interface_drivings(&dom(), &paths, 400).unwrap();
        for d in drivings {
            d.validate().unwrap();
            assert!(d.t_end() > 0.0);
        }
    }

    #[test]
    fn heat_bath_matches_enumeration() {
        let d = HexDomain::new(3, 2, BoundaryCondition::Chordal).unwrap();
        let beta = triangular_critical_beta();
        let mut m = HexIsing::new(d, beta, 3).unwrap();
        let n = m.spins.len();
        // exact per-cell magnetization
        let (mut z, mut mag) = (0.0, vec![0.0; n]);
        for mask in 0..1u32 << n {
            for i in 0..n {
                m.spins[i] = if mask >> i & 1 == 1 { 1 } else { -1 };
            }
            let w = (-beta * m.energy() as f64).exp();
            z += w;
            for i in 0..n {
                mag[i] += w * m.spins[i] as f64;
            }
        }
        let exact: Vec<f64> = mag.iter().map(|v| v / z).collect();
        let (batches, per) = (100, 2000);
        let mut means = vec![vec![0.0; n]; batches];
        for b in means.iter_mut() {
            for _ in 0..per {
                m.sweep();
                for i in 0..n {
                    b[i] += m.spins[i] as f64 / per as f64;
                }
            }
        }
        for i in 0..n {
            let col: Vec<f64> = means.iter().map(|b| b[i]).collect();
            let se = (crate::stats::variance(&col) / batches as f64).sqrt();
            let est = crate::stats::mean(&col);
            assert!((est - exact[i]).abs() < 4.0 * se, "cell {i}: {est} vs {}", exact[i]);
        }
        // the boundary arcs make the right half positive on average
        assert!(exact[n - 1] > 0.0 && exact[0] < 0.0);
    }
}
