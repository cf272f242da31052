//! The winding observable `F(c) = E[1{c on the trajectory} e^{−iπw/4}]`,
//! `w` the winding from `b` to `c` in quarter turns, and its discrete
//! Cauchy–Riemann residual.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loops::{LoopChain, LoopConfiguration, LoopEnsembleSummary, LoopMethod, LOOP_ENUMERATION_CAP};
use super::medial::{TileDomain, TileState};
use crate::conformal::{ConformalMap, RectToStrip};
use crate::{rng, Error, Result};

const H: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// `e^{−iπn/4}` for `n mod 8`.
const PHASES: [Complex64; 8] = [
    Complex64::new(1.0, 0.0),
    Complex64::new(H, -H),
    Complex64::new(0.0, -1.0),
    Complex64::new(-H, -H),
    Complex64::new(-1.0, 0.0),
    Complex64::new(-H, H),
    Complex64::new(0.0, 1.0),
    Complex64::new(H, H),
];

#[inline]
pub fn phase(quarter_turns: i32) -> Complex64 {
    PHASES[quarter_turns.rem_euclid(8) as usize]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    pub values: Vec<Complex64>,
    /// Probability that the trajectory visits each side (the naive
    /// observable).
    pub visits: Vec<f64>,
    /// Per-side standard error of `values`, from batch means.
    pub std_err: Option<Vec<f64>>,
    pub n_samples: u64,
    /// Batch means of `values`, kept for residual error estimates.
    #[serde(skip)]
    pub batches: Vec<Vec<Complex64>>,
}

#[derive(Debug, Clone)]
struct Accumulator {
    sum: Vec<Complex64>,
    visits: Vec<f64>,
    weight: f64,
}

impl Accumulator {
    fn new(n: usize) -> Self {
        Accumulator {
            sum: vec![Complex64::new(0.0, 0.0); n],
            visits: vec![0.0; n],
            weight: 0.0,
        }
    }

    fn add(&mut self, domain: &TileDomain, tiles: &[TileState], w: f64) -> Result<()> {
        for v in domain.trajectory_from_b(tiles)? {
            self.sum[v.side as usize] += w * phase(v.winding);
            self.visits[v.side as usize] += w;
        }
        self.weight += w;
        Ok(())
    }

    fn means(&self) -> (Vec<Complex64>, Vec<f64>) {
        let z = self.weight.max(f64::MIN_POSITIVE);
        (
            self.sum.iter().map(|s| s / z).collect(),
            self.visits.iter().map(|s| s / z).collect(),
        )
    }
}

/// Accumulates the observable over given configurations.
pub fn smirnov_observable(domain: &TileDomain, ensemble: &[LoopConfiguration]) -> Result<Observable> {
    let mut acc = Accumulator::new(domain.n_sides());
    for cfg in ensemble {
        acc.add(domain, &cfg.tiles, 1.0)?;
    }
    let (values, visits) = acc.means();
    Ok(Observable {
        values,
        visits,
        std_err: None,
        n_samples: ensemble.len() as u64,
        batches: vec![],
    })
}

/// Exact observable under the critical measure `∝ (√2)^b`.
pub fn exact_observable(domain: &TileDomain) -> Result<Observable> {
    let n = domain.n_tiles();
    if n > LOOP_ENUMERATION_CAP {
        return Err(Error::EnumerationTooLarge {
            size: n,
            cap: LOOP_ENUMERATION_CAP,
        });
    }
    let mut acc = Accumulator::new(domain.n_sides());
    for m in 0..1u64 << n {
        let cfg = LoopConfiguration::from_mask(domain, m)?;
        acc.add(domain, &cfg.tiles, 2f64.sqrt().powi(cfg.counts.b as i32))?;
    }
    let (values, visits) = acc.means();
    Ok(Observable {
        values,
        visits,
        std_err: None,
        n_samples: 1 << n,
        batches: vec![],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainPlan {
    pub chains: usize,
    pub burn_in_sweeps: usize,
    /// Recorded configurations per chain, one per sweep.
    pub samples_per_chain: usize,
    /// Batches per chain for error bars.
    pub batches_per_chain: usize,
}

type Batch = (Vec<Complex64>, Vec<f64>);

struct ChainOutput {
    batches: Vec<Batch>,
    b_histogram: BTreeMap<usize, usize>,
    proposed: u64,
    accepted: u64,
}

/// Metropolis estimate of the critical observable with independent chains
/// seeded from `seed`; chains are merged in index order. Also returns the
/// loop-count histogram and acceptance rate of the recorded sweeps.
pub fn mc_observable(domain: &TileDomain, plan: ChainPlan, seed: u64) -> Result<(Observable, LoopEnsembleSummary)> {
    if plan.chains == 0 || plan.samples_per_chain == 0 || plan.batches_per_chain == 0 {
        return Err(Error::InvalidArgument(
            "chain plan needs chains, samples and batches".into(),
        ));
    }
    let per_batch = (plan.samples_per_chain / plan.batches_per_chain).max(1);
    let chains: Vec<ChainOutput> = (0..plan.chains)
        .into_par_iter()
        .map(|c| -> Result<ChainOutput> {
            let mut chain = LoopChain::new(domain, super::critical_beta(), rng::hash2(seed, c as u64))?;
            for _ in 0..plan.burn_in_sweeps {
                chain.sweep();
            }
            let (p0, a0) = (chain.proposed, chain.accepted);
            let mut out = ChainOutput {
                batches: Vec::new(),
                b_histogram: BTreeMap::new(),
                proposed: 0,
                accepted: 0,
            };
            let mut acc = Accumulator::new(domain.n_sides());
            for k in 0..plan.samples_per_chain {
                chain.sweep();
                acc.add(domain, &chain.tiles, 1.0)?;
                *out.b_histogram.entry(chain.b).or_insert(0) += 1;
                if (k + 1) % per_batch == 0 {
                    out.batches.push(acc.means());
                    acc = Accumulator::new(domain.n_sides());
                }
            }
            out.proposed = chain.proposed - p0;
            out.accepted = chain.accepted - a0;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut b_histogram = BTreeMap::new();
    let (mut proposed, mut accepted) = (0u64, 0u64);
    let mut flat: Vec<Batch> = Vec::new();
    for c in chains {
        for (b, n) in c.b_histogram {
            *b_histogram.entry(b).or_insert(0) += n;
        }
        proposed += c.proposed;
        accepted += c.accepted;
        flat.extend(c.batches);
    }
    let nb = flat.len() as f64;
    let ns = domain.n_sides();
    let mut values = vec![Complex64::new(0.0, 0.0); ns];
    let mut visits = vec![0.0; ns];
    for (v, f) in &flat {
        for s in 0..ns {
            values[s] += v[s] / nb;
            visits[s] += f[s] / nb;
        }
    }
    let std_err = (0..ns)
        .map(|s| {
            let var = flat.iter().map(|(v, _)| (v[s] - values[s]).norm_sqr()).sum::<f64>() / (nb - 1.0).max(1.0);
            (var / nb).sqrt()
        })
        .collect();
    let n_samples = flat.len() * per_batch;
    let summary = LoopEnsembleSummary {
        method: LoopMethod::TileFlipMetropolis,
        n_samples,
        b_histogram,
        acceptance_rate: Some(accepted as f64 / proposed.max(1) as f64),
    };
    Ok((
        Observable {
            values,
            visits,
            std_err: Some(std_err),
            n_samples: n_samples as u64,
            batches: flat.into_iter().map(|(v, _)| v).collect(),
        },
        summary,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrResidual {
    /// Residual per side; `None` where the stencil is incomplete.
    pub field: Vec<Option<Complex64>>,
    pub max: f64,
    pub rms: f64,
    pub tested: usize,
    pub skipped: usize,
    /// RMS with the expected noise contribution removed, when batch means
    /// are available.
    pub rms_debiased: Option<f64>,
    /// RMS size of the residual expected from noise alone.
    pub rms_noise: Option<f64>,
}

#[inline]
fn stencil(values: &[Complex64], st: [u32; 4]) -> Complex64 {
    let [ne, nw, sw, se] = st.map(|s| values[s as usize]);
    nw - se - Complex64::i() * (ne - sw)
}

/// `R(c) = F(c_NW) − F(c_SE) − i(F(c_NE) − F(c_SW))` over the sides whose
/// four diagonal neighbours exist.
pub fn discrete_cr_residual(domain: &TileDomain, f: &Observable) -> CrResidual {
    let field: Vec<Option<Complex64>> = (0..domain.n_sides())
        .map(|s| domain.side_stencil(s).map(|st| stencil(&f.values, st)))
        .collect();
    let vals: Vec<f64> = field.iter().flatten().map(|r| r.norm()).collect();
    let tested = vals.len();
    let rms = (vals.iter().map(|v| v * v).sum::<f64>() / tested.max(1) as f64).sqrt();
    let (rms_debiased, rms_noise) = if f.batches.len() >= 2 {
        let nb = f.batches.len() as f64;
        let mut noise = 0.0;
        for s in 0..domain.n_sides() {
            if let Some(st) = domain.side_stencil(s) {
                let rs: Vec<Complex64> = f.batches.iter().map(|b| stencil(b, st)).collect();
                let m: Complex64 = rs.iter().sum::<Complex64>() / nb;
                noise += rs.iter().map(|r| (r - m).norm_sqr()).sum::<f64>() / (nb - 1.0) / nb;
            }
        }
        let noise = noise / tested.max(1) as f64;
        (Some((rms * rms - noise).max(0.0).sqrt()), Some(noise.sqrt()))
    } else {
        (None, None)
    };
    CrResidual {
        field,
        max: vals.iter().cloned().fold(0.0, f64::max),
        rms,
        tested,
        skipped: domain.n_sides() - tested,
        rms_debiased,
        rms_noise,
    }
}

/// Value at each tile centre: half the sum over the tile's four sides.
pub fn tile_values(domain: &TileDomain, f: &Observable) -> Vec<Complex64> {
    (0..domain.n_tiles())
        .map(|t| {
            domain
                .tile_sides(t)
                .iter()
                .map(|&s| f.values[s as usize])
                .sum::<Complex64>()
                / 2.0
        })
        .collect()
}

/// `c (Φ′)^{1/2}` for the map `Φ` of the tile rectangle onto the unit-width
/// strip, with `|c| = 1` chosen so the phase at `b` is zero, matching the
/// winding origin.
#[derive(Debug, Clone)]
pub struct StripReference {
    map: RectToStrip,
    scale: f64,
    center: Complex64,
    center_value: Complex64,
    rot: Complex64,
}

pub const STRIP_NORMALIZATION: &str =
    "sqrt(Phi') rotated to phase 0 at b, rectangle scaled to unit width, branch continued from the top midpoint";

impl StripReference {
    pub fn new(domain: &TileDomain) -> Result<Self> {
        let scale = 1.0 / domain.width as f64;
        let r = domain.height as f64 * scale;
        let map = RectToStrip::new(r)?;
        // continue from just below b to the centre
        let center = Complex64::new(0.5, r / 2.0);
        let start = Complex64::new(0.5, r * (1.0 - 1e-3));
        let s0 = map.derivative(start)?.sqrt();
        let rot = s0.conj() / s0.norm();
        let g = |z: Complex64| -> Result<Complex64> { Ok(rot * map.derivative(z)?.sqrt()) };
        let v = continue_branch(&g, start, center, Complex64::new(s0.norm(), 0.0))?;
        Ok(StripReference {
            map,
            scale,
            center,
            center_value: v,
            rot,
        })
    }

    /// Reference value at `(x, y)` in tile units.
    pub fn at(&self, x: f64, y: f64) -> Result<Complex64> {
        let (map, rot) = (&self.map, self.rot);
        let g = |z: Complex64| -> Result<Complex64> { Ok(rot * map.derivative(z)?.sqrt()) };
        continue_branch(&g, self.center, Complex64::new(x, y) * self.scale, self.center_value)
    }

    pub fn phi(&self, x: f64, y: f64) -> Result<Complex64> {
        self.map.eval(Complex64::new(x, y) * self.scale)
    }
}

fn continue_branch(
    g: &impl Fn(Complex64) -> Result<Complex64>,
    from: Complex64,
    to: Complex64,
    mut v: Complex64,
) -> Result<Complex64> {
    let steps = 64;
    for k in 1..=steps {
        let z = from + (to - from) * (k as f64 / steps as f64);
        let mut u = g(z)?;
        if (u - v).norm() > (u + v).norm() {
            u = -u;
        }
        if (u * v.conj()).arg().abs() > std::f64::consts::FRAC_PI_2 {
            return Err(Error::BranchDiscontinuity(format!("phase jump near {z}")));
        }
        v = u;
    }
    Ok(v)
}

/// Reference field at every side midpoint.
pub fn strip_reference(domain: &TileDomain) -> Result<Vec<Complex64>> {
    let r = StripReference::new(domain)?;
    (0..domain.n_sides())
        .map(|s| {
            let (x, y) = domain.side_midpoint(s);
            r.at(x, y)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseComparison {
    /// Mean of `arg(F/F_ref)` over mid-domain tile centres.
    pub mean_bias: f64,
    pub rms_angle: f64,
    pub tiles_used: usize,
    pub normalization: String,
}

/// Compares tile-centre values with the strip reference on the tiles whose
/// centres lie in the middle half of the rectangle in both directions.
pub fn phase_bias(domain: &TileDomain, f: &Observable) -> Result<PhaseComparison> {
    let reference = StripReference::new(domain)?;
    let tv = tile_values(domain, f);
    let (w, h) = (domain.width as f64, domain.height as f64);
    let mut angles = Vec::new();
    for (t, v) in tv.iter().enumerate() {
        let (x, y) = domain.tile_xy(t);
        let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
        if (cx - w / 2.0).abs() <= w / 4.0 && (cy - h / 2.0).abs() <= h / 4.0 && v.norm() > 0.0 {
            angles.push((v / reference.at(cx, cy)?).arg());
        }
    }
    if angles.is_empty() {
        return Err(Error::InvalidTileDomain("no mid-domain tiles".into()));
    }
    let n = angles.len() as f64;
    Ok(PhaseComparison {
        mean_bias: angles.iter().sum::<f64>() / n,
        rms_angle: (angles.iter().map(|a| a * a).sum::<f64>() / n).sqrt(),
        tiles_used: angles.len(),
        normalization: STRIP_NORMALIZATION.into(),
    })
}

/// The discrete CR residual of the naive observable `f(c) = P(c visited)`,
/// kept as a negative control.
pub fn naive_cr_residual(domain: &TileDomain, f: &Observable) -> CrResidual {
    let naive = Observable {
        values: f.visits.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        visits: f.visits.clone(),
        std_err: None,
        n_samples: f.n_samples,
        batches: vec![],
    };
    discrete_cr_residual(domain, &naive)
}

pub const OBSERVABLE_CSV_HEADER: &str = "side_x,side_y,re_f,im_f,n";

impl Observable {
    /// One row per side; `n` is the number of samples behind the estimate.
    pub fn csv_rows(&self, domain: &TileDomain) -> Vec<String> {
        self.values
            .iter()
            .enumerate()
            .map(|(s, v)| {
                let (x, y) = domain.side_midpoint(s);
                format!("{x},{y},{:.12e},{:.12e},{}", v.re, v.im, self.n_samples)
            })
            .collect()
    }
}
