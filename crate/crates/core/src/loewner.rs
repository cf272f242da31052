//! Chordal Loewner chains in the upper half-plane.
//!
//! Everything is built from the vertical-slit map
//! `g(z) = ξ + √((z − ξ)² + h²)`, which removes a vertical slit of height
//! `h` at `ξ` and has half-plane capacity `h²/4`, and its inverse
//! `f(w) = ξ + √((w − ξ)² − h²)`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{rng, stats, Error, Result};

/// Square root with image in the closed upper half-plane; on the real
/// axis the sign follows `reference`.
#[inline]
fn sqrt_up(x: Complex64, reference: f64) -> Complex64 {
    let s = x.sqrt();
    if s.im < 0.0 || (s.im == 0.0 && s.re * reference < 0.0) {
        -s
    } else {
        s
    }
}

/// `g(z) − z` for the slit `(xi, h)`, computed without cancellation.
#[inline]
pub fn slit_displacement(z: Complex64, xi: f64, h: f64) -> Complex64 {
    let w = z - xi;
    let s = sqrt_up(w * w + h * h, w.re);
    let den = s + w;
    if den.norm() > 1e-300 {
        h * h / den
    } else {
        s - w
    }
}

#[inline]
pub fn slit_map(z: Complex64, xi: f64, h: f64) -> Complex64 {
    z + slit_displacement(z, xi, h)
}

#[inline]
pub fn slit_inverse(w: Complex64, xi: f64, h: f64) -> Complex64 {
    let u = w - xi;
    xi + sqrt_up(u * u - h * h, u.re)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DrivingOrigin {
    SyntheticBrownian { kappa: f64 },
    Extracted { curve_id: String },
    Constant { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrivingFunction {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub origin: DrivingOrigin,
}

impl DrivingFunction {
    pub fn new(times: Vec<f64>, values: Vec<f64>, origin: DrivingOrigin) -> Result<Self> {
        let d = DrivingFunction { times, values, origin };
        d.validate()?;
        Ok(d)
    }

    pub fn constant(value: f64, t_end: f64) -> Result<Self> {
        DrivingFunction::new(vec![0.0, t_end], vec![value; 2], DrivingOrigin::Constant { value })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidDriving(m.to_string()));
        if self.times.is_empty() || self.times.len() != self.values.len() {
            return bad("times and values must be non-empty and of equal length");
        }
        if self.times[0] != 0.0 {
            return bad("times must start at 0");
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("times must be strictly increasing");
        }
        if self.values.iter().chain(&self.times).any(|v| !v.is_finite()) {
            return bad("non-finite entries");
        }
        Ok(())
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("validated")
    }

    /// Piecewise-linear interpolation; `None` beyond the last time.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        if t < 0.0 || t > self.t_end() {
            return None;
        }
        let k = self.times.partition_point(|&s| s <= t);
        if k >= self.times.len() {
            return Some(*self.values.last().unwrap());
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let (v0, v1) = (self.values[k - 1], self.values[k]);
        Some(v0 + (v1 - v0) * (t - t0) / (t1 - t0))
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `t,xi,curve_id` rows without header.
    pub fn csv_rows(&self, curve_id: usize) -> String {
        self.times
            .iter()
            .zip(&self.values)
            .map(|(t, x)| format!("{t},{x},{curve_id}\n"))
            .collect()
    }
}

pub const DRIVING_CSV_HEADER: &str = "t,xi,curve_id";
pub const TRACE_CSV_HEADER: &str = "t,x,y,curve_id";

/// `ψ_t` as a composition of slit maps, first slit applied first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoewnerState {
    pub t: f64,
    pub slits: Vec<(f64, f64)>,
}

impl LoewnerState {
    pub fn push(&mut self, xi: f64, dt: f64) {
        self.slits.push((xi, 2.0 * dt.sqrt()));
        self.t += dt;
    }

    /// `(ψ_t(z), ψ_t(z) − z)` with the displacement summed stably.
    pub fn eval_with_displacement(&self, z: Complex64) -> (Complex64, Complex64) {
        let mut w = z;
        let mut disp = Complex64::new(0.0, 0.0);
        for &(xi, h) in &self.slits {
            let d = slit_displacement(w, xi, h);
            w += d;
            disp += d;
        }
        (w, disp)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.eval_with_displacement(z).0
    }

    /// `ψ_t⁻¹(w)`, last slit undone first.
    pub fn inverse(&self, w: Complex64) -> Complex64 {
        self.slits.iter().rev().fold(w, |z, &(xi, h)| slit_inverse(z, xi, h))
    }

    /// `|ψ_t(z) − z − 2t/z|` at `z = i·radius`.
    pub fn expansion_residual(&self, radius: f64) -> f64 {
        let z = Complex64::new(0.0, radius);
        let (_, disp) = self.eval_with_displacement(z);
        (disp - 2.0 * self.t / z).norm()
    }

    /// Capacity defect `|2D(2iR) − D(iR) − 2t|` with `D(z) = z(ψ_t(z) − z)`;
    /// the two radii cancel the `O(1/z)` term.
    pub fn normalization_defect(&self, radius: f64) -> f64 {
        let d = |r: f64| {
            let z = Complex64::new(0.0, r);
            z * self.eval_with_displacement(z).1
        };
        (2.0 * d(2.0 * radius) - d(radius) - 2.0 * self.t).norm()
    }

    pub fn from_driving(xi: &DrivingFunction) -> Self {
        let mut s = LoewnerState::default();
        for k in 1..xi.times.len() {
            s.push(xi.values[k], xi.times[k] - xi.times[k - 1]);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub values: Vec<Complex64>,
    /// Time at which `|ψ − ξ|` fell below the swallowing tolerance.
    pub swallowed_at: Option<f64>,
}

/// Integrates `dψ/dt = 2/(ψ − ξ(t))` from `z0` with adaptive
/// Dormand–Prince steps that never straddle a node of `ξ`.
pub fn solve_forward(xi: &DrivingFunction, z0: Complex64, t_end: f64) -> Result<Trajectory> {
    xi.validate()?;
    if z0.im < 0.0 {
        return Err(Error::OutsideDomain(format!("{z0} below the real axis")));
    }
    if !(t_end >= 0.0) || t_end > xi.t_end() * (1.0 + 1e-15) {
        return Err(Error::InvalidArgument(format!(
            "t_end {t_end} beyond the driving function"
        )));
    }
    let eps = 1e-9 * (1.0 + z0.norm());
    let f = |t: f64, y: Complex64| 2.0 / (y - xi.value_at(t.min(xi.t_end())).unwrap());
    let (rtol, atol) = (1e-13, 1e-13);
    let mut out = Trajectory {
        times: vec![0.0],
        values: vec![z0],
        swallowed_at: None,
    };
    let (mut t, mut y) = (0.0, z0);
    let mut h = (t_end / 100.0).max(1e-12);
    let mut node = 1;
    while t < t_end {
        if (y - xi.value_at(t).unwrap()).norm() < eps {
            out.swallowed_at = Some(t);
            return Ok(out);
        }
        while node < xi.times.len() && xi.times[node] <= t {
            node += 1;
        }
        let stop = if node < xi.times.len() {
            xi.times[node].min(t_end)
        } else {
            t_end
        };
        let step = h.min(stop - t);
        let (y5, err) = dopri_step(&f, t, y, step);
        let scale = atol + rtol * y.norm().max(y5.norm());
        let ratio = err / scale;
        if ratio <= 1.0 || step < 1e-15 {
            t = if step == stop - t { stop } else { t + step };
            y = y5;
            out.times.push(t);
            out.values.push(y);
        }
        let factor = if ratio == 0.0 {
            5.0
        } else {
            (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = step * factor;
        if !y.is_finite() {
            out.swallowed_at = Some(t);
            return Ok(out);
        }
    }
    Ok(out)
}

fn dopri_step(f: &impl Fn(f64, Complex64) -> Complex64, t: f64, y: Complex64, h: f64) -> (Complex64, f64) {
    let k1 = f(t, y);
    let k2 = f(t + h / 5.0, y + h * (k1 / 5.0));
    let k3 = f(t + 3.0 * h / 10.0, y + h * (3.0 / 40.0 * k1 + 9.0 / 40.0 * k2));
    let k4 = f(
        t + 4.0 * h / 5.0,
        y + h * (44.0 / 45.0 * k1 - 56.0 / 15.0 * k2 + 32.0 / 9.0 * k3),
    );
    let k5 = f(
        t + 8.0 * h / 9.0,
        y + h * (19372.0 / 6561.0 * k1 - 25360.0 / 2187.0 * k2 + 64448.0 / 6561.0 * k3 - 212.0 / 729.0 * k4),
    );
    let k6 = f(
        t + h,
        y + h
            * (9017.0 / 3168.0 * k1 - 355.0 / 33.0 * k2 + 46732.0 / 5247.0 * k3 + 49.0 / 176.0 * k4
                - 5103.0 / 18656.0 * k5),
    );
    let y5 = y + h
        * (35.0 / 384.0 * k1 + 500.0 / 1113.0 * k3 + 125.0 / 192.0 * k4 - 2187.0 / 6784.0 * k5 + 11.0 / 84.0 * k6);
    let k7 = f(t + h, y5);
    let y4 = y + h
        * (5179.0 / 57600.0 * k1 + 7571.0 / 16695.0 * k3 + 393.0 / 640.0 * k4 - 92097.0 / 339200.0 * k5
            + 187.0 / 2100.0 * k6
            + 1.0 / 40.0 * k7);
    (y5, (y5 - y4).norm())
}

/// `ξ(t_k) = √κ · Σ N(0, dt)` on `t_k = k·dt`.
pub fn sample_driving(kappa: f64, n_steps: usize, dt: f64, seed: u64) -> Result<DrivingFunction> {
    if !(kappa >= 0.0) || !(dt > 0.0) || n_steps == 0 {
        return Err(Error::InvalidArgument(
            "need κ ≥ 0, dt > 0 and at least one step".into(),
        ));
    }
    let mut g = rng::stream(seed, 0x51e);
    let sd = (kappa * dt).sqrt();
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut values = Vec::with_capacity(n_steps + 1);
    let mut x = 0.0;
    times.push(0.0);
    values.push(0.0);
    for k in 1..=n_steps {
        let z: f64 = g.sample(StandardNormal);
        x += sd * z;
        times.push(k as f64 * dt);
        values.push(x);
    }
    DrivingFunction::new(times, values, DrivingOrigin::SyntheticBrownian { kappa })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub times: Vec<f64>,
    pub points: Vec<Complex64>,
    pub kappa: Option<f64>,
    pub driving: DrivingFunction,
}

impl Trace {
    pub fn csv_rows(&self, curve_id: usize) -> String {
        self.times
            .iter()
            .zip(&self.points)
            .map(|(t, p)| format!("{t},{},{},{curve_id}\n", p.re, p.im))
            .collect()
    }
}

/// Tips `γ(t_k) = f_1 ∘ … ∘ f_k(ξ_k)` of the slit-map discretization of
/// the chain driven by `xi`, at every `stride`-th step and at the last one.
pub fn trace_from_driving(xi: &DrivingFunction, stride: usize) -> Result<Trace> {
    xi.validate()?;
    let stride = stride.max(1);
    let state = LoewnerState::from_driving(xi);
    let n = state.slits.len();
    let mut times = vec![0.0];
    let mut points = vec![Complex64::new(xi.values[0], 0.0)];
    for k in (1..=n).filter(|k| k % stride == 0 || *k == n) {
        let (x, _) = state.slits[k - 1];
        let tip = state.slits[..k]
            .iter()
            .rev()
            .fold(Complex64::new(x, 0.0), |z, &(xi, h)| slit_inverse(z, xi, h));
        times.push(xi.times[k]);
        points.push(Complex64::new(tip.re, tip.im.max(0.0)));
    }
    let kappa = match xi.origin {
        DrivingOrigin::SyntheticBrownian { kappa } => Some(kappa),
        _ => None,
    };
    Ok(Trace {
        times,
        points,
        kappa,
        driving: xi.clone(),
    })
}

pub fn sample_sle(kappa: f64, n_steps: usize, dt: f64, seed: u64) -> Result<Trace> {
    sample_sle_strided(kappa, n_steps, dt, seed, 1)
}

pub fn sample_sle_strided(kappa: f64, n_steps: usize, dt: f64, seed: u64, stride: usize) -> Result<Trace> {
    if !(kappa > 0.0) {
        return Err(Error::InvalidArgument(format!("κ must be positive, got {kappa}")));
    }
    trace_from_driving(&sample_driving(kappa, n_steps, dt, seed)?, stride)
}

/// Incremental vertical-slit zipper.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Zipper {
    pub state: LoewnerState,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Points that landed on the real axis after mapping and were skipped.
    pub skipped: usize,
    pub processed: usize,
}

impl Zipper {
    pub fn new(start: f64) -> Self {
        Zipper {
            times: vec![0.0],
            values: vec![start],
            ..Default::default()
        }
    }

    /// Maps each point through the slits found so far and flattens the
    /// next segment with a vertical slit.
    pub fn push_points(&mut self, points: &[Complex64]) -> Result<()> {
        let tol = 1e-12;
        for &p in points {
            let idx = self.processed;
            self.processed += 1;
            if p.im < -tol * (1.0 + p.norm()) || !p.is_finite() {
                return Err(Error::CurveExitsHalfPlane { index: idx, imag: p.im });
            }
            let mut w = Complex64::new(p.re, p.im.max(0.0));
            for &(xi, h) in &self.state.slits {
                w = slit_map(w, xi, h);
            }
            if w.im < -tol * (1.0 + w.norm()) {
                return Err(Error::CurveExitsHalfPlane { index: idx, imag: w.im });
            }
            let h = w.im.max(0.0);
            if h <= tol * (1.0 + w.norm()) || self.state.t + h * h / 4.0 <= self.state.t {
                self.skipped += 1;
                continue;
            }
            self.state.slits.push((w.re, h));
            self.state.t += h * h / 4.0;
            self.times.push(self.state.t);
            self.values.push(w.re);
        }
        Ok(())
    }

    pub fn driving(&self, curve_id: impl Into<String>) -> Result<DrivingFunction> {
        DrivingFunction::new(
            self.times.clone(),
            self.values.clone(),
            DrivingOrigin::Extracted {
                curve_id: curve_id.into(),
            },
        )
    }
}

/// Evenly thins a polyline to at most `n_points` vertices, keeping both
/// ends.
pub fn subsample(curve: &[Complex64], n_points: usize) -> Vec<Complex64> {
    if n_points < 2 || curve.len() <= n_points {
        return curve.to_vec();
    }
    let last = curve.len() - 1;
    let mut out: Vec<Complex64> = (0..n_points).map(|i| curve[i * last / (n_points - 1)]).collect();
    out.dedup();
    out
}

/// Driving function of a polyline starting on the real axis; the curve is
/// thinned to `n_points` vertices first.
pub fn extract_driving(curve: &[Complex64], n_points: usize) -> Result<(DrivingFunction, usize)> {
    let first = *curve.first().ok_or(Error::TooFewSamples { needed: 2, got: 0 })?;
    if first.im.abs() > 1e-12 * (1.0 + first.norm()) {
        return Err(Error::CurveNotRooted(first.im));
    }
    let pts = subsample(curve, n_points);
    let mut z = Zipper::new(first.re);
    z.push_points(&pts[1..])?;
    Ok((z.driving("curve")?, z.skipped))
}

/// `n` times from `t_min` to `t_max` in geometric progression.
pub fn geometric_grid(t_min: f64, t_max: f64, n: usize) -> Result<Vec<f64>> {
    if !(t_min > 0.0 && t_max > t_min) || n < 2 {
        return Err(Error::InvalidArgument("need 0 < t_min < t_max and n ≥ 2".into()));
    }
    Ok((0..n)
        .map(|i| t_min * (t_max / t_min).powf(i as f64 / (n - 1) as f64))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaEstimate {
    pub kappa: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_curves: usize,
    /// `(t_j, Var ξ(t_j))`.
    pub variance: Vec<(f64, f64)>,
    pub increment_skew: f64,
    pub increment_excess_kurtosis: f64,
    pub increment_lag1_corr: f64,
}

fn sample_grid(ensemble: &[DrivingFunction], grid: &[f64]) -> Vec<Vec<f64>> {
    ensemble
        .iter()
        .filter_map(|d| {
            grid.iter()
                .map(|&t| d.value_at(t).map(|v| v - d.values[0]))
                .collect::<Option<Vec<f64>>>()
        })
        .collect()
}

fn kappa_from_rows(rows: &[&Vec<f64>], grid: &[f64]) -> (f64, Vec<f64>) {
    let vars: Vec<f64> = (0..grid.len())
        .map(|j| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            stats::variance(&col)
        })
        .collect();
    // least squares through the origin with relative errors
    let k = vars.iter().zip(grid).map(|(v, t)| v / t).sum::<f64>() / grid.len() as f64;
    (k, vars)
}

/// Fits `Var ξ(t) = κ t` on `grid`; the CI is a percentile bootstrap over
/// curves. Curves shorter than the grid are dropped.
pub fn estimate_kappa(ensemble: &[DrivingFunction], grid: &[f64], n_boot: usize, seed: u64) -> Result<KappaEstimate> {
    const MIN: usize = 100;
    if grid.len() < 2 {
        return Err(Error::InvalidArgument("time grid needs at least two points".into()));
    }
    let rows = sample_grid(ensemble, grid);
    if rows.len() < MIN {
        return Err(Error::TooFewSamples {
            needed: MIN,
            got: rows.len(),
        });
    }
    let all: Vec<&Vec<f64>> = rows.iter().collect();
    let (kappa, vars) = kappa_from_rows(&all, grid);

    let mut g = rng::stream(seed, 0xb007);
    let mut boots: Vec<f64> = (0..n_boot)
        .map(|_| {
            let pick: Vec<&Vec<f64>> = (0..rows.len()).map(|_| &rows[g.random_range(0..rows.len())]).collect();
            kappa_from_rows(&pick, grid).0
        })
        .collect();
    boots.sort_by(f64::total_cmp);
    let (ci_low, ci_high) = if boots.is_empty() {
        (kappa, kappa)
    } else {
        (
            stats::quantile_sorted(&boots, 0.025),
            stats::quantile_sorted(&boots, 0.975),
        )
    };

    // increments between consecutive grid times, standardized
    let mut incs = Vec::new();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for r in &rows {
        let mut prev = None;
        for j in 1..grid.len() {
            let d = (r[j] - r[j - 1]) / (kappa * (grid[j] - grid[j - 1])).sqrt();
            incs.push(d);
            if let Some(p) = prev {
                a.push(p);
                b.push(d);
            }
            prev = Some(d);
        }
    }
    let (increment_skew, increment_excess_kurtosis) = stats::skew_kurtosis(&incs);
    let increment_lag1_corr = if a.len() > 2 {
        stats::correlation(&a, &b)
    } else {
        f64::NAN
    };
    Ok(KappaEstimate {
        kappa,
        ci_low,
        ci_high,
        n_curves: rows.len(),
        variance: grid.iter().copied().zip(vars).collect(),
        increment_skew,
        increment_excess_kurtosis,
        increment_lag1_corr,
    })
}

/// Correlation between the past value `ξ(t_e)` and the later increment
/// `ξ(t) − ξ(t_e)` across the ensemble, with its standard error `1/√n`.
pub fn markov_correlation(ensemble: &[DrivingFunction], t_e: f64, t: f64) -> Result<(f64, f64)> {
    let rows = sample_grid(ensemble, &[t_e, t]);
    if rows.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: rows.len(),
        });
    }
    let past: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let future: Vec<f64> = rows.iter().map(|r| r[1] - r[0]).collect();
    Ok((stats::correlation(&past, &future), 1.0 / (rows.len() as f64).sqrt()))
}
