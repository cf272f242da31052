//! Run configuration: one JSON document per run.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{ConfigError, HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ExperimentKind {
    CrossingSweep,
    Universality,
    ConformalImage,
    CardyTable,
    Carleson,
    SleSample,
    ZipperRoundtrip,
    KappaEstimate,
    IsingObservable,
    CrResidual,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 10] = [
        ExperimentKind::CrossingSweep,
        ExperimentKind::Universality,
        ExperimentKind::ConformalImage,
        ExperimentKind::CardyTable,
        ExperimentKind::Carleson,
        ExperimentKind::SleSample,
        ExperimentKind::ZipperRoundtrip,
        ExperimentKind::KappaEstimate,
        ExperimentKind::IsingObservable,
        ExperimentKind::CrResidual,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::CrossingSweep => "crossing_sweep",
            ExperimentKind::Universality => "universality",
            ExperimentKind::ConformalImage => "conformal_image",
            ExperimentKind::CardyTable => "cardy_table",
            ExperimentKind::Carleson => "carleson",
            ExperimentKind::SleSample => "sle_sample",
            ExperimentKind::ZipperRoundtrip => "zipper_roundtrip",
            ExperimentKind::KappaEstimate => "kappa_estimate",
            ExperimentKind::IsingObservable => "ising_observable",
            ExperimentKind::CrResidual => "cr_residual",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Experiment-specific keys, checked by the experiment's parameter type.
    pub parameters: Map<String, Value>,
    pub seed: u64,
    pub replicas: usize,
    pub output_path: PathBuf,
}

/// Command-line values that take precedence over the document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub experiment: Option<ExperimentKind>,
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub output_path: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let doc: Value =
            serde_json::from_str(&text).map_err(|e| ConfigError::invalid("config", format!("not valid JSON: {e}")))?;
        Ok(Self::from_value(doc, overrides)?)
    }

    /// Checks the document and collects every missing or invalid key.
    pub fn from_value(doc: Value, overrides: &Overrides) -> std::result::Result<Self, ConfigError> {
        let mut err = ConfigError::default();
        let Value::Object(mut doc) = doc else {
            return Err(ConfigError::invalid("config", "expected a JSON object"));
        };
        let known = ["experiment", "parameters", "seed", "replicas", "output_path"];
        for k in doc.keys() {
            if !known.contains(&k.as_str()) {
                err.invalid.push((k.clone(), "unknown key".into()));
            }
        }
        let mut take = |key: &str| doc.remove(key);

        let experiment = match (overrides.experiment, take("experiment")) {
            (Some(cli), Some(v)) => {
                if serde_json::from_value::<ExperimentKind>(v.clone()).ok() != Some(cli) {
                    err.invalid.push((
                        "experiment".into(),
                        format!("config names {v} but the command line names {cli}"),
                    ));
                }
                Some(cli)
            }
            (Some(cli), None) => Some(cli),
            (None, Some(v)) => field(&mut err, "experiment", v),
            (None, None) => {
                err.missing.push("experiment".into());
                None
            }
        };
        let parameters = match take("parameters") {
            Some(Value::Object(m)) => m,
            Some(_) => {
                err.invalid.push(("parameters".into(), "expected an object".into()));
                Map::new()
            }
            None => {
                err.missing.push("parameters".into());
                Map::new()
            }
        };
        let seed = match (overrides.seed, take("seed")) {
            (Some(s), _) => Some(s),
            (None, Some(v)) => field(&mut err, "seed", v),
            (None, None) => {
                err.missing.push("seed".into());
                None
            }
        };
        let replicas = match (overrides.replicas, take("replicas")) {
            (Some(r), _) => Some(r),
            (None, Some(v)) => field(&mut err, "replicas", v),
            (None, None) => Some(1),
        };
        if replicas == Some(0) {
            err.invalid.push(("replicas".into(), "must be at least 1".into()));
        }
        let output_path = match (overrides.output_path.clone(), take("output_path")) {
            (Some(p), _) => Some(p),
            (None, Some(v)) => field(&mut err, "output_path", v),
            (None, None) => {
                err.missing.push("output_path".into());
                None
            }
        };
        if let Some(kind) = experiment {
            let e = crate::experiments::check_parameters(kind, &parameters);
            err.missing
                .extend(e.missing.into_iter().map(|k| format!("parameters.{k}")));
            err.invalid
                .extend(e.invalid.into_iter().map(|(k, why)| (format!("parameters.{k}"), why)));
        }
        if !err.is_empty() {
            return Err(err);
        }
        Ok(ExperimentConfig {
            experiment: experiment.expect("checked"),
            parameters,
            seed: seed.expect("checked"),
            replicas: replicas.expect("checked"),
            output_path: output_path.expect("checked"),
        })
    }

    /// The document echoed into provenance headers.
    pub fn echo(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

fn field<T: DeserializeOwned>(err: &mut ConfigError, key: &str, v: Value) -> Option<T> {
    match serde_json::from_value(v) {
        Ok(x) => Some(x),
        Err(e) => {
            err.invalid.push((key.into(), e.to_string()));
            None
        }
    }
}

/// Typed experiment parameters.
pub trait Params: DeserializeOwned {
    const REQUIRED: &'static [&'static str];
    const OPTIONAL: &'static [&'static str] = &[];

    /// Value checks beyond types: `(key, reason)` pairs.
    fn check(&self) -> Vec<(String, String)> {
        vec![]
    }
}

/// Missing keys first, then type errors, then value checks.
pub fn parse_params<P: Params>(map: &Map<String, Value>) -> std::result::Result<P, ConfigError> {
    let missing: Vec<String> = P::REQUIRED
        .iter()
        .filter(|k| !map.contains_key(**k))
        .map(|k| k.to_string())
        .collect();
    let unknown: Vec<(String, String)> = map
        .keys()
        .filter(|k| !P::REQUIRED.contains(&k.as_str()) && !P::OPTIONAL.contains(&k.as_str()))
        .map(|k| (k.clone(), "unknown key".to_string()))
        .collect();
    if !missing.is_empty() || !unknown.is_empty() {
        return Err(ConfigError {
            missing,
            invalid: unknown,
        });
    }
    let p: P = serde_json::from_value(Value::Object(map.clone()))
        .map_err(|e| ConfigError::invalid("parameters", e.to_string()))?;
    let invalid = p.check();
    if invalid.is_empty() {
        Ok(p)
    } else {
        Err(ConfigError {
            missing: vec![],
            invalid,
        })
    }
}

pub(crate) fn positive(key: &str, v: f64, out: &mut Vec<(String, String)>) {
    if !(v > 0.0 && v.is_finite()) {
        out.push((key.into(), format!("must be positive, got {v}")));
    }
}

pub(crate) fn at_least(key: &str, v: u64, min: u64, out: &mut Vec<(String, String)>) {
    if v < min {
        out.push((key.into(), format!("must be at least {min}, got {v}")));
    }
}
