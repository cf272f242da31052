//! The experiments and their parameters.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use critlab_core::cardy::{cardy, cardy_table, carleson_triangle};
use critlab_core::conformal::{conformal_image_triplet, rect_to_disk};
use critlab_core::crossing::{rasterize, rectangle_mesh, sweep_aspect, Triplet, SWEEP_CSV_HEADER};
use critlab_core::exploration::{explore, path_driving, BoundaryCondition, HexDomain};
use critlab_core::fk_ising::interface::{
    interface_drivings, sample_interfaces, triangular_critical_beta, InterfacePlan,
};
use critlab_core::fk_ising::observable::{
    discrete_cr_residual, exact_observable, mc_observable, naive_cr_residual, phase_bias, ChainPlan,
    OBSERVABLE_CSV_HEADER,
};
use critlab_core::fk_ising::TileDomain;
use critlab_core::lattice::{LatticeKind, Mode, ModelDescriptor, PercolationModel, PlaneMap};
use critlab_core::loewner::{
    estimate_kappa, extract_driving, geometric_grid, sample_driving, sample_sle_strided, DrivingFunction,
    DRIVING_CSV_HEADER, TRACE_CSV_HEADER,
};
use critlab_core::rng::{hash2, hash3, sample_seed};
use critlab_core::stats;

use crate::config::{at_least, parse_params, positive, ExperimentConfig, ExperimentKind, Params};
use crate::error::{ConfigError, Result};

/// A data file produced by an experiment, before the provenance header.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Csv { header: String, rows: Vec<String> },
    Json(Value),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<(String, Payload)>,
    pub results: Value,
}

impl Outcome {
    fn new(results: Value) -> Self {
        Outcome { files: vec![], results }
    }

    fn csv(mut self, name: &str, header: &str, rows: Vec<String>) -> Self {
        self.files.push((
            name.into(),
            Payload::Csv {
                header: header.into(),
                rows,
            },
        ));
        self
    }

    fn json(mut self, name: &str, v: Value) -> Self {
        self.files.push((name.into(), Payload::Json(v)));
        self
    }
}

/// Runs `f` on `replicas` contiguous blocks of `0..n` in parallel and
/// concatenates the results in block order, so the output does not depend
/// on `replicas`.
pub fn fan_out<T: Send>(
    n: usize,
    replicas: usize,
    f: impl Fn(Range<usize>) -> Result<Vec<T>> + Sync,
) -> Result<Vec<T>> {
    let r = replicas.max(1);
    let parts: Vec<Vec<T>> = (0..r)
        .into_par_iter()
        .map(|i| f(n * i / r..n * (i + 1) / r))
        .collect::<Result<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}

pub fn check_parameters(kind: ExperimentKind, map: &Map<String, Value>) -> ConfigError {
    fn go<P: Params>(map: &Map<String, Value>) -> ConfigError {
        parse_params::<P>(map).err().unwrap_or_default()
    }
    match kind {
        ExperimentKind::CrossingSweep => go::<CrossingSweep>(map),
        ExperimentKind::Universality => go::<Universality>(map),
        ExperimentKind::ConformalImage => go::<ConformalImage>(map),
        ExperimentKind::CardyTable => go::<CardyTable>(map),
        ExperimentKind::Carleson => go::<Carleson>(map),
        ExperimentKind::SleSample => go::<SleSample>(map),
        ExperimentKind::ZipperRoundtrip => go::<ZipperRoundtrip>(map),
        ExperimentKind::KappaEstimate => go::<KappaEstimateParams>(map),
        ExperimentKind::IsingObservable => go::<IsingObservable>(map),
        ExperimentKind::CrResidual => go::<CrResidualParams>(map),
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    let p = &cfg.parameters;
    let (seed, reps) = (cfg.seed, cfg.replicas);
    match cfg.experiment {
        ExperimentKind::CrossingSweep => parse_params::<CrossingSweep>(p)?.run(seed, reps),
        ExperimentKind::Universality => parse_params::<Universality>(p)?.run(seed, reps),
        ExperimentKind::ConformalImage => parse_params::<ConformalImage>(p)?.run(seed, reps),
        ExperimentKind::CardyTable => parse_params::<CardyTable>(p)?.run(),
        ExperimentKind::Carleson => parse_params::<Carleson>(p)?.run(seed, reps),
        ExperimentKind::SleSample => parse_params::<SleSample>(p)?.run(seed, reps),
        ExperimentKind::ZipperRoundtrip => parse_params::<ZipperRoundtrip>(p)?.run(seed, reps),
        ExperimentKind::KappaEstimate => parse_params::<KappaEstimateParams>(p)?.run(seed, reps),
        ExperimentKind::IsingObservable => parse_params::<IsingObservable>(p)?.run(seed),
        ExperimentKind::CrResidual => parse_params::<CrResidualParams>(p)?.run(seed),
    }
}

fn non_empty<T>(key: &str, v: &[T], out: &mut Vec<(String, String)>) {
    if v.is_empty() {
        out.push((key.into(), "must not be empty".into()));
    }
}

fn all_positive(key: &str, v: &[f64], out: &mut Vec<(String, String)>) {
    non_empty(key, v, out);
    for x in v {
        positive(key, *x, out);
    }
}

fn build_model(d: &ModelDescriptor) -> Result<PercolationModel> {
    Ok(d.build()?)
}

fn model_label(m: &PercolationModel) -> String {
    format!("{}-{}", m.graph.kind, m.mode)
}

// ---------------------------------------------------------------- crossing

#[derive(Debug, Clone, Deserialize)]
pub struct CrossingSweep {
    pub model: ModelDescriptor,
    /// Aspect ratios (height / width).
    pub r: Vec<f64>,
    /// Sites along the short side.
    pub l: u32,
    pub n_samples: u64,
}

impl Params for CrossingSweep {
    const REQUIRED: &'static [&'static str] = &["model", "r", "l", "n_samples"];

    fn check(&self) -> Vec<(String, String)> {
        let mut out = vec![];
        all_positive("r", &self.r, &mut out);
        at_least("l", self.l as u64, 2, &mut out);
        at_least("n_samples", self.n_samples, 1, &mut out);
        out
    }
}

impl CrossingSweep {
    fn run(&self, seed: u64, replicas: usize) -> Result<Outcome> {
        let model = build_model(&self.model)?;
        let rows = sweep_aspect(&model, &self.r, self.l, self.n_samples, seed, replicas)?;
        let mut table = vec![];
        let mut max_dev: f64 = 0.0;
        for row in &rows {
            let c = cardy(row.r)?;
            let dev = row.estimate.p_hat - c;
            max_dev = max_dev.max(dev.abs());
            table.push(json!({
                "r": row.r,
                "p_hat": row.estimate.p_hat,
                "std_err": row.estimate.std_err,
                "cardy": c,
                "deviation": dev,
            }));
        }
        let csv = rows.iter().map(|r| r.csv()).collect();
        Ok(Outcome::new(json!({
            "model": model.id(),
            "rows": table,
            "max_abs_deviation_from_cardy": max_dev,
        }))
        .csv("crossing_sweep.csv", SWEEP_CSV_HEADER, csv))
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct Universality {
    pub models: Vec<ModelDescriptor>,
    pub r: Vec<f64>,
    pub l: u32,
    pub n_samples: u64,
    /// Optional linear map applied to each model, in model order.
    #[serde(default)]
    pub maps: Option<Vec<[[f64; 2]; 2]>>,
}

impl Params for Universality {
    const REQUIRED: &'static [&'static str] = &["models", "r", "l", "n_samples"];
    const OPTIONAL: &'static [&'static str] = &["maps"];

    fn check(&self) -> Vec<(String, String)> {
        let mut out = vec![];
        if self.models.len() < 2 {
            out.push(("models".into(), "need at least two models".into()));
        }
        if let Some(m) = &self.maps {
            if m.len() != self.models.len() {
                out.push(("maps".into(), "need one matrix per model".into()));
            }
        }
        all_positive("r", &self.r, &mut out);
        at_least("l", self.l as u64, 2, &mut out);
        at_least("n_samples", self.n_samples, 1, &mut out);
        out
    }
}

impl Universality {
    fn run(&self, seed: u64, replicas: usize) -> Result<Outcome> {
        let mut models = vec![];
        for (i, d) in self.models.iter().enumerate() {
            let m = build_model(d)?;
            let m = match &self.maps {
                Some(maps) => m.apply_map(&PlaneMap::new(maps[i])?)?,
                None => m,
            };
            models.push(m);
        }
        // est[m][i]: model m on aspect ratio r[i]
        let mut est = vec![];
        for (mi, m) in models.iter().enumerate() {
            let mut row = vec![];
            for (ri, &r) in self.r.iter().enumerate() {
                let dt = rasterize(&Triplet::rectangle(r)?, m, rectangle_mesh(r, self.l))?;
                row.push(dt.estimate_replicated(self.n_samples, hash3(seed, mi as u64, ri as u64), replicas)?);
            }
            est.push(row);
        }
        let mut csv = vec![];
        let mut pairs = vec![];
        let mut max_z: f64 = 0.0;
        for a in 0..models.len() {
            for b in a + 1..models.len() {
                for (ri, &r) in self.r.iter().enumerate() {
                    let (ea, eb) = (&est[a][ri], &est[b][ri]);
                    let z = stats::z_score(ea.p_hat, ea.std_err, eb.p_hat, eb.std_err);
                    max_z = max_z.max(z.abs());
                    let (la, lb) = (model_label(&models[a]), model_label(&models[b]));
                    csv.push(format!(
                        "{la},{lb},{r},{},{},{},{},{z}",
                        ea.p_hat, ea.std_err, eb.p_hat, eb.std_err
                    ));
                    pairs.push(json!({"a": la, "b": lb, "r": r, "z": z}));
                }
            }
        }
        let estimates = est
            .iter()
            .zip(&models)
            .flat_map(|(row, m)| {
                row.iter().zip(&self.r).map(move |(e, r)| {
                    format!(
                        "{},{},{},{},{},{}",
                        model_label(m),
                        r,
                        e.mesh,
                        e.n_samples,
                        e.p_hat,
                        e.std_err
                    )
                })
            })
            .collect();
        Ok(Outcome::new(json!({"pairs": pairs, "max_abs_z": max_z}))
            .csv("universality.csv", "model_a,model_b,r,p_hat_a,se_a,p_hat_b,se_b,z", csv)
            .csv("estimates.csv", "model,r,delta,n,p_hat,std_err", estimates))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageMap {
    Disk,
    Identity,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ConformalImage {
    pub model: ModelDescriptor,
    pub r: Vec<f64>,
    pub map: ImageMap,
    pub delta: f64,
    pub n_samples: u64,
    #[serde(default = "default_per_side")]
    pub per_side: usize,
}

fn default_per_side() -> usize {
    64
}

impl Params for ConformalImage {
    const REQUIRED: &'static [&'static str] = &["model", "r", "map", "delta", "n_samples"];
    const OPTIONAL: &'static [&'static str] = &["per_side"];

    fn check(&self) -> Vec<(String, String)> {
        let mut out = vec![];
        all_positive("r", &self.r, &mut out);
        positive("delta", self.delta, &mut out);
        at_least("n_samples", self.n_samples, 1, &mut out);
        at_least("per_side", self.per_side as u64, 4, &mut out);
        out
    }
}

impl ConformalImage {
    fn run(&self, seed: u64, replicas: usize) -> Result<Outcome> {
        let model = build_model(&self.model)?;
        let mut csv = vec![];
        let mut rows = vec![];
        let mut max_z: f64 = 0.0;
        for (i, &r) in self.r.iter().enumerate() {
            let t = match self.map {
                ImageMap::Disk => conformal_image_triplet(r, &rect_to_disk(r)?, self.per_side)?,
                ImageMap::Identity => Triplet::rectangle(r)?,
            };
            let e = rasterize(&t, &model, self.delta)?.estimate_replicated(
                self.n_samples,
                hash2(seed, i as u64),
                replicas,
            )?;
            let c = cardy(r)?;
            let z = (e.p_hat - c) / e.std_err.max(f64::MIN_POSITIVE);
            max_z = max_z.max(z.abs());
            let map = match self.map {
                ImageMap::Disk => "disk",
                ImageMap::Identity => "identity",
            };
            csv.push(format!(
                "{r},{map},{},{},{},{},{c},{z}",
                self.delta, e.n_samples, e.p_hat, e.std_err
            ));
            rows.push(json!({"r": r, "p_hat": e.p_hat, "std_err": e.std_err, "cardy": c, "z": z}));
        }
        Ok(Outcome::new(json!({"rows": rows, "max_abs_z": max_z})).csv(
            "conformal_image.csv",
            "r,map,delta,n,p_hat,std_err,cardy,z",
            csv,
        ))
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct CardyTable {
    pub r_min: f64,
    pub r_max: f64,
    pub n: usize,
}

impl Params for CardyTable {
    const REQUIRED: &'static [&'static str] = &["r_min", "r_max", "n"];

    fn check(&self) -> Vec<(String, String)> {
        let mut out = vec![];
        positive("r_min", self.r_min, &mut out);
        positive("r_max", self.r_max, &mut out);
        if self.r_max <= self.r_min {
            out.push(("r_max".into(), "must exceed r_min".into()));
        }
        at_least("n", self.n as u64, 2, &mut out);
        out
    }
}

impl CardyTable {
    fn run(&self) -> Result<Outcome> {
        let rows = cardy_table(self.r_min, self.r_max, self.n)?;
        let csv = rows.iter().map(|(r, eta, c)| format!("{r},{eta},{c}")).collect();
        Ok(
            Outcome::new(json!({"n_rows": rows.len(), "cardy_at_1": cardy(1.0)?})).csv(
                "cardy_table.csv",
                "r,eta,cardy",
                csv,
            ),
        )
    }
}

fn default_triangular_site() -> ModelDescriptor {
    ModelDescriptor {
        lattice: LatticeKind::Triangular,
        mode: Mode::Site,
        p: serde_json::from_value(json!("critical")).expect("named probability"),
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct Carleson {
    pub x: Vec<f64>,
    pub delta: f64,
    pub n_samples: u64,
    #[serde(default = "default_triangular_site")]
    pub model: ModelDescriptor,
}

impl Params for Carleson {
    const REQUIRED: &'static [&'static str] = &["x", "delta", "n_samples"];
    const OPTIONAL: &'static [&'static str] = &["model"];

    fn check(&self) -> Vec<(String, String)> {
        let mut out = vec![];
        non_empty("x", &self.x, &mut out);
        for &x in &self.x {
            if !(x > 0.0 && x <= 1.0) {
                out.push(("x".into(), format!("must lie in (0, 1], got {x}")));
            }
        }
        positive("delta", self.delta, &mut out);
        at_least("n_samples", self.n_samples, 1, &mut out);
        out
    }
}

impl Carleson {
    fn run(&self, seed: u64, replicas: usize) -> Result<Outcome> {
        let model = build_model(&self.model)?;
        let mut csv = vec![];
        let mut rows = vec![];
        let mut max_dev: f64 = 0.0;
        for (i, &x) in self.x.iter().enumerate() {
            let (want, t) = carleson_triangle(x)?;
            let t = t.expect("x > 0");
            let e = rasterize(&t, &model, self.delta)?.estimate_replicated(
                self.n_samples,
                hash2(seed, i as u64),
                replicas,
            )?;
            let dev = e.p_hat - want;
            max_dev = max_dev.max(dev.abs());
            csv.push(format!(
                "{x},{},{},{},{},{want},{dev}",
                self.delta, e.n_samples, e.p_hat, e.std_err
            ));
            rows.push(json!({"x": x, "p_hat": e.p_hat, "std_err": e.std_err, "deviation": dev}));
        }
        Ok(Outcome::new(json!({"rows": rows, "max_abs_deviation": max_dev})).csv(
            "carleson.csv",
            "x,delta,n,p_hat,std_err,expected,deviation",
            csv,
        ))
    }
}

// --------------------------------------------------------------------- SLE

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
pub struct SleSample {
    pub kappa: f64,
    pub steps: usize,
    pub dt: f64,
    pub n: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

impl Params for SleSample {
    const REQUIRED: &'static [&'static str] = &["kappa", "steps", "dt", "n"];
    const OPTIONAL: &'static [&'static str] = &["stride"];

    fn check(&self) -> Vec<(String, String)> {
        let mut out = vec![];
        positive("kappa", self.kappa, &mut out);
        positive("dt", self.dt, &mut out);
        at_least("steps", self.steps as u64, 1, &mut out);
        at_least("n", self.n as u64, 1, &mut out);
        at_least("stride", self.stride as u64, 1, &mut out);
        out
    }
}

impl SleSample {
    fn run(&self, seed: u64, replicas: usize) -> Result<Outcome> {
        let traces = fan_out(self.n, replicas, |range| {
            range
                .map(|i| {
                    Ok(sample_sle_strided(
                        self.kappa,
                        self.steps,
                        self.dt,
                        sample_seed(seed, i as u64),
                        self.stride,
                    )?)
                })
                .collect()
        })?;
        let mut trace_rows = vec![];
        let mut driving_rows = vec![];
        for (i, t) in traces.iter().enumerate() {
            trace_rows.extend(t.csv_rows(i).lines().map(str::to_owned));
            driving_rows.extend(t.driving.csv_rows(i).lines().map(str::to_owned));
        }
        let sups: Vec<f64> = traces.iter().map(|t| t.driving.sup_abs()).collect();
        let heights: Vec<f64> = traces
            .iter()
            .map(|t| t.points.iter().fold(0.0, |m: f64, p| m.max(p.im)))
            .collect();
        Ok(Outcome::new(json!({
            "n_curves": traces.len(),
            "t_end": self.steps as f64 * self.dt,
            "mean_sup_abs_xi": stats::mean(&sups),
            "mean_max_height": stats::mean(&heights),
        }))
        .csv("traces.csv", TRACE_CSV_HEADER, trace_rows)
        .csv("driving.csv", DRIVING_CSV_HEADER, driving_rows))
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct ZipperRoundtrip {
    pub kappa: f64,
    pub steps: usize,
    pub dt: f64,
    pub n: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Thinning of each trace before zipping; all points by default.
    #[serde(default)]
    pub n_points: Option<usize>,
}

impl Params for ZipperRoundtrip {
    const REQUIRED: &'static [&'static str] = &["kappa", "steps", "dt", "n"];
    const OPTIONAL: &'static [&'static str] = &["stride", "n_points"];

    fn check(&self) -> Vec<(String, String)> {
        let mut out = vec![];
        positive("kappa", self.kappa, &mut out);
        positive("dt", self.dt, &mut out);
        at_least("steps", self.steps as u64, 1, &mut out);
        at_least("n", self.n as u64, 1, &mut out);
        at_least("stride", self.stride as u64, 1, &mut out);
        if let Some(k) = self.n_points {
            at_least("n_points", k as u64, 2, &mut out);
        }
        out
    }
}

/// Largest gap between a recovered driving function and the original,
/// over the recovered times.
pub fn sup_driving_error(original: &DrivingFunction, recovered: &DrivingFunction) -> f64 {
    recovered
        .times
        .iter()
        .zip(&recovered.values)
        .filter_map(|(&t, &v)| original.value_at(t).map(|x| (x - v).abs()))
        .fold(0.0, f64::max)
}

impl ZipperRoundtrip {
    fn run(&self, seed: u64, replicas: usize) -> Result<Outcome> {
        let rows = fan_out(self.n, replicas, |range| {
            range
                .map(|i| {
                    let t = sample_sle_strided(
                        self.kappa,
                        self.steps,
                        self.dt,
                        sample_seed(seed, i as u64),
                        self.stride,
                    )?;
                    let (rec, skipped) = extract_driving(&t.points, self.n_points.unwrap_or(usize::MAX))?;
                    let sup = t.driving.sup_abs();
                    let err = sup_driving_error(&t.driving, &rec);
                    Ok((i, sup, err, skipped, rec))
                })
                .collect()
        })?;
        let mut csv = vec![];
        let mut recovered = vec![];
        let mut worst: f64 = 0.0;
        for (i, sup, err, skipped, rec) in &rows {
            let rel = err / sup.max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
            csv.push(format!("{i},{sup},{err},{rel},{skipped},{}", rec.t_end()));
            recovered.extend(rec.csv_rows(*i).lines().map(str::to_owned));
        }
        Ok(
            Outcome::new(json!({"n_curves": rows.len(), "max_relative_error": worst}))
                .csv(
                    "roundtrip.csv",
                    "curve_id,sup_xi,sup_error,relative_error,skipped,t_end",
                    csv,
                )
                .csv("recovered_driving.csv", DRIVING_CSV_HEADER, recovered),
        )
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveSource {
    /// Brownian driving functions sampled directly.
    Synthetic {
        kappa: f64,
        steps: usize,
        dt: f64,
        n: usize,
    },
    /// SLE traces zipped back to driving functions.
    SleTraces {
        kappa: f64,
        steps: usize,
        dt: f64,
        n: usize,
        #[serde(default = "one_usize")]
        stride: usize,
    },
    /// Chordal exploration paths of site percolation on hexagon cells.
    Percolation {
        cols: i64,
        #[serde(default = "one")]
        r: f64,
        #[serde(default = "half")]
        p: f64,
        n_paths: usize,
    },
    /// Spin interfaces of the critical Ising model on hexagon cells with
    /// Dobrushin boundary values.
    Ising {
        cols: i64,
        #[serde(default = "one")]
        r: f64,
        chains: usize,
        burn_in_sweeps: usize,
        #[serde(default = "one_usize")]
        curves_per_chain: usize,
        #[serde(default)]
        spacing_sweeps: usize,
    },
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
pub struct KappaEstimateParams {
    pub source: CurveSource,
    pub t_min: f64,
    pub t_max: f64,
    #[serde(default = "default_grid")]
    pub n_grid: usize,
    #[serde(default = "default_boot")]
    pub n_boot: usize,
    #[serde(default = "default_points")]
    pub n_points: usize,
    /// Acceptance band reported in the summary.
    #[serde(default)]
    pub band: Option<[f64; 2]>,
}

fn default_grid() -> usize {
    12
}
fn default_boot() -> usize {
    1000
}
fn default_points() -> usize {
    1500
}

impl Params for KappaEstimateParams {
    const REQUIRED: &'static [&'static str] = &["source", "t_min", "t_max"];
    const OPTIONAL: &'static [&'static str] = &["n_grid", "n_boot", "n_points", "band"];

    fn check(&self) -> Vec<(String, String)> {
        let mut out = vec![];
        positive("t_min", self.t_min, &mut out);
        if self.t_max.is_nan() || self.t_max <= self.t_min {
            out.push(("t_max".into(), "must exceed t_min".into()));
        }
        at_least("n_grid", self.n_grid as u64, 2, &mut out);
        at_least("n_points", self.n_points as u64, 2, &mut out);
        match &self.source {
            CurveSource::Synthetic { kappa, dt, steps, n } => {
                positive("source.kappa", *kappa, &mut out);
                positive("source.dt", *dt, &mut out);
                at_least("source.steps", *steps as u64, 1, &mut out);
                at_least("source.n", *n as u64, 1, &mut out);
            }
            CurveSource::SleTraces {
                kappa,
                dt,
                steps,
                n,
                stride,
            } => {
                positive("source.kappa", *kappa, &mut out);
                positive("source.dt", *dt, &mut out);
                at_least("source.steps", *steps as u64, 1, &mut out);
                at_least("source.n", *n as u64, 1, &mut out);
                at_least("source.stride", *stride as u64, 1, &mut out);
            }
            CurveSource::Percolation { cols, r, p, n_paths } => {
                at_least("source.cols", (*cols).max(0) as u64, 3, &mut out);
                positive("source.r", *r, &mut out);
                if !(0.0..=1.0).contains(p) {
                    out.push(("source.p".into(), format!("must lie in [0, 1], got {p}")));
                }
                at_least("source.n_paths", *n_paths as u64, 1, &mut out);
            }
            CurveSource::Ising {
                cols,
                r,
                chains,
                curves_per_chain,
                ..
            } => {
                at_least("source.cols", (*cols).max(0) as u64, 3, &mut out);
                positive("source.r", *r, &mut out);
                at_least("source.chains", *chains as u64, 1, &mut out);
                at_least("source.curves_per_chain", *curves_per_chain as u64, 1, &mut out);
            }
        }
        out
    }
}

impl KappaEstimateParams {
    /// Driving functions of the configured source and the total zipper
    /// skips.
    pub fn drivings(&self, seed: u64, replicas: usize) -> Result<(Vec<DrivingFunction>, usize)> {
        match self.source {
            CurveSource::Synthetic { kappa, steps, dt, n } => {
                let d = fan_out(n, replicas, |range| {
                    range
                        .map(|i| Ok(sample_driving(kappa, steps, dt, sample_seed(seed, i as u64))?))
                        .collect()
                })?;
                Ok((d, 0))
            }
            CurveSource::SleTraces {
                kappa,
                steps,
                dt,
                n,
                stride,
            } => {
                let res = fan_out(n, replicas, |range| {
                    range
                        .map(|i| {
                            let t = sample_sle_strided(kappa, steps, dt, sample_seed(seed, i as u64), stride)?;
                            Ok(extract_driving(&t.points, self.n_points)?)
                        })
                        .collect()
                })?;
                let skipped = res.iter().map(|r| r.1).sum();
                Ok((res.into_iter().map(|r| r.0).collect(), skipped))
            }
            CurveSource::Percolation { cols, r, p, n_paths } => {
                let domain = HexDomain::with_aspect(cols, r, BoundaryCondition::Chordal)?;
                let res = fan_out(n_paths, replicas, |range| {
                    range
                        .map(|i| {
                            let path = explore(&domain, p, sample_seed(seed, i as u64))?;
                            Ok(path_driving(&path, &domain, self.n_points)?)
                        })
                        .collect()
                })?;
                let skipped = res.iter().map(|r| r.1).sum();
                Ok((res.into_iter().map(|r| r.0).collect(), skipped))
            }
            CurveSource::Ising {
                cols,
                r,
                chains,
                burn_in_sweeps,
                curves_per_chain,
                spacing_sweeps,
            } => {
                let domain = HexDomain::with_aspect(cols, r, BoundaryCondition::Chordal)?;
                let plan = InterfacePlan {
                    chains,
                    burn_in_sweeps,
                    curves_per_chain,
                    spacing_sweeps,
                };
                let paths = sample_interfaces(&domain, triangular_critical_beta(), plan, seed)?;
                Ok(interface_drivings(&domain, &paths, self.n_points)?)
            }
        }
    }

    fn run(&self, seed: u64, replicas: usize) -> Result<Outcome> {
        let (ds, skipped) = self.drivings(hash2(seed, 0), replicas)?;
        let grid = geometric_grid(self.t_min, self.t_max, self.n_grid)?;
        let k = estimate_kappa(&ds, &grid, self.n_boot, hash2(seed, 1))?;
        let csv = k.variance.iter().map(|(t, v)| format!("{t},{v},{}", v / t)).collect();
        let in_band = self.band.map(|[lo, hi]| (lo..=hi).contains(&k.kappa));
        Ok(Outcome::new(json!({
            "kappa": k.kappa,
            "ci_low": k.ci_low,
            "ci_high": k.ci_high,
            "n_curves": k.n_curves,
            "n_generated": ds.len(),
            "zipper_skipped": skipped,
            "increment_skew": k.increment_skew,
            "increment_excess_kurtosis": k.increment_excess_kurtosis,
            "increment_lag1_corr": k.increment_lag1_corr,
            "band": self.band,
            "in_band": in_band,
        }))
        .csv("variance.csv", "t,var_xi,var_over_t", csv)
        .json("kappa.json", serde_json::to_value(&k)?))
    }
}

// ------------------------------------------------------------------- Ising

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableMethod {
    Metropolis,
    Exact,
}

fn default_chains() -> usize {
    4
}
fn default_burn_in() -> usize {
    1000
}
fn default_batches() -> usize {
    20
}
fn default_method() -> ObservableMethod {
    ObservableMethod::Metropolis
}

#[derive(Debug, Clone, Deserialize)]
pub struct IsingObservable {
    pub rows: usize,
    pub cols: usize,
    /// Total recorded sweeps over all chains.
    pub samples: u64,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in_sweeps: usize,
    #[serde(default = "default_batches")]
    pub batches_per_chain: usize,
    #[serde(default = "default_method")]
    pub method: ObservableMethod,
}

impl Params for IsingObservable {
    const REQUIRED: &'static [&'static str] = &["rows", "cols", "samples"];
    const OPTIONAL: &'static [&'static str] = &["chains", "burn_in_sweeps", "batches_per_chain", "method"];

    fn check(&self) -> Vec<(String, String)> {
        let mut out = vec![];
        at_least("rows", self.rows as u64, 1, &mut out);
        at_least("cols", self.cols as u64, 2, &mut out);
        at_least("chains", self.chains as u64, 1, &mut out);
        at_least("batches_per_chain", self.batches_per_chain as u64, 1, &mut out);
        at_least(
            "samples",
            self.samples,
            (self.chains * self.batches_per_chain) as u64,
            &mut out,
        );
        out
    }
}

impl IsingObservable {
    fn run(&self, seed: u64) -> Result<Outcome> {
        let domain = TileDomain::chordal_rect(self.cols, self.rows)?;
        let (obs, loops) = match self.method {
            ObservableMethod::Exact => (exact_observable(&domain)?, Value::Null),
            ObservableMethod::Metropolis => {
                let plan = ChainPlan {
                    chains: self.chains,
                    burn_in_sweeps: self.burn_in_sweeps,
                    samples_per_chain: (self.samples as usize).div_ceil(self.chains),
                    batches_per_chain: self.batches_per_chain,
                };
                let (obs, summary) = mc_observable(&domain, plan, seed)?;
                (obs, serde_json::to_value(&summary)?)
            }
        };
        let cr = discrete_cr_residual(&domain, &obs);
        let naive = naive_cr_residual(&domain, &obs);
        let phase = phase_bias(&domain, &obs).ok();
        let mut out = Outcome::new(json!({
            "n_samples": obs.n_samples,
            "cr_rms": cr.rms,
            "cr_max": cr.max,
            "cr_rms_debiased": cr.rms_debiased,
            "cr_rms_noise": cr.rms_noise,
            "sides_tested": cr.tested,
            "sides_skipped": cr.skipped,
            "naive_cr_rms": naive.rms,
            "phase": phase,
        }))
        .csv("observable.csv", OBSERVABLE_CSV_HEADER, obs.csv_rows(&domain));
        if !loops.is_null() {
            out = out.json("loops.json", loops);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct CrResidualParams {
    /// Square domains of `size × size` tiles.
    pub sizes: Vec<usize>,
    /// Recorded sweeps per chain, the same for every size.
    pub samples_per_chain: usize,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in_sweeps: usize,
    #[serde(default = "default_batches")]
    pub batches_per_chain: usize,
}

impl Params for CrResidualParams {
    const REQUIRED: &'static [&'static str] = &["sizes", "samples_per_chain"];
    const OPTIONAL: &'static [&'static str] = &["chains", "burn_in_sweeps", "batches_per_chain"];

    fn check(&self) -> Vec<(String, String)> {
        let mut out = vec![];
        non_empty("sizes", &self.sizes, &mut out);
        for &s in &self.sizes {
            at_least("sizes", s as u64, 2, &mut out);
        }
        at_least("chains", self.chains as u64, 1, &mut out);
        at_least("batches_per_chain", self.batches_per_chain as u64, 2, &mut out);
        at_least(
            "samples_per_chain",
            self.samples_per_chain as u64,
            self.batches_per_chain as u64,
            &mut out,
        );
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRow {
    pub size: usize,
    pub n_samples: u64,
    pub rms: f64,
    pub rms_debiased: Option<f64>,
    pub rms_noise: Option<f64>,
    pub max: f64,
    pub tested: usize,
    pub skipped: usize,
    pub naive_rms: f64,
    pub phase_bias: Option<f64>,
    pub phase_rms: Option<f64>,
}

impl CrResidualParams {
    pub fn rows(&self, seed: u64) -> Result<Vec<ResidualRow>> {
        let plan = ChainPlan {
            chains: self.chains,
            burn_in_sweeps: self.burn_in_sweeps,
            samples_per_chain: self.samples_per_chain,
            batches_per_chain: self.batches_per_chain,
        };
        self.sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let domain = TileDomain::chordal_rect(n, n)?;
                let (obs, _) = mc_observable(&domain, plan, hash2(seed, i as u64))?;
                let cr = discrete_cr_residual(&domain, &obs);
                let phase = phase_bias(&domain, &obs).ok();
                Ok(ResidualRow {
                    size: n,
                    n_samples: obs.n_samples,
                    rms: cr.rms,
                    rms_debiased: cr.rms_debiased,
                    rms_noise: cr.rms_noise,
                    max: cr.max,
                    tested: cr.tested,
                    skipped: cr.skipped,
                    naive_rms: naive_cr_residual(&domain, &obs).rms,
                    phase_bias: phase.as_ref().map(|p| p.mean_bias),
                    phase_rms: phase.as_ref().map(|p| p.rms_angle),
                })
            })
            .collect()
    }

    fn run(&self, seed: u64) -> Result<Outcome> {
        let rows = self.rows(seed)?;
        let non_increasing = rows.windows(2).all(|w| w[1].rms <= w[0].rms);
        let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        let csv = rows
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    r.size,
                    r.n_samples,
                    r.rms,
                    opt(r.rms_debiased),
                    opt(r.rms_noise),
                    r.max,
                    r.tested,
                    r.skipped,
                    r.naive_rms,
                    opt(r.phase_bias),
                    opt(r.phase_rms)
                )
            })
            .collect();
        Ok(
            Outcome::new(json!({"rows": rows, "rms_non_increasing": non_increasing})).csv(
                "cr_residual.csv",
                "size,n,rms,rms_debiased,rms_noise,max,tested,skipped,naive_rms,phase_bias,phase_rms",
                csv,
            ),
        )
    }
}
