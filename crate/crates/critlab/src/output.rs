//! Writing artifacts with provenance.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::experiments::{Outcome, Payload};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SUMMARY_FILE: &str = "summary.json";
pub const META_FILE: &str = "run.meta.json";

/// Deterministic provenance of a run: no clocks, no host names.
pub fn provenance(cfg: &ExperimentConfig) -> Value {
    json!({
        "tool": "critlab",
        "version": VERSION,
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "replicas": cfg.replicas,
        "config": cfg,
    })
}

fn csv_text(cfg: &ExperimentConfig, header: &str, rows: &[String]) -> String {
    let mut s = format!(
        "# critlab {VERSION}\n# experiment: {}\n# seed: {}\n# replicas: {}\n# config: {}\n{header}\n",
        cfg.experiment,
        cfg.seed,
        cfg.replicas,
        cfg.echo()
    );
    for r in rows {
        s.push_str(r);
        s.push('\n');
    }
    s
}

fn json_text(v: &impl Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub provenance: Value,
    pub files: Vec<String>,
    pub results: Value,
}

/// Renders every file in memory first so nothing is written when a step
/// fails; then writes them under `cfg.output_path`.
pub fn write_outcome(cfg: &ExperimentConfig, outcome: &Outcome, started: SystemTime) -> Result<Summary> {
    let mut rendered: Vec<(String, String)> = vec![];
    for (name, payload) in &outcome.files {
        let text = match payload {
            Payload::Csv { header, rows } => csv_text(cfg, header, rows),
            Payload::Json(v) => json_text(&json!({"provenance": provenance(cfg), "data": v}))?,
        };
        rendered.push((name.clone(), text));
    }
    let mut files: Vec<String> = rendered.iter().map(|(n, _)| n.clone()).collect();
    files.push(SUMMARY_FILE.into());
    let summary = Summary {
        provenance: provenance(cfg),
        files,
        results: outcome.results.clone(),
    };
    rendered.push((SUMMARY_FILE.into(), json_text(&summary)?));

    let dir = &cfg.output_path;
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    for (name, text) in &rendered {
        write_file(&dir.join(name), text)?;
    }
    let finished = SystemTime::now();
    let meta = json!({
        "started_unix": unix(started),
        "finished_unix": unix(finished),
        "elapsed_seconds": finished.duration_since(started).map(|d| d.as_secs_f64()).unwrap_or(0.0),
        "threads": rayon::current_num_threads(),
    });
    write_file(&dir.join(META_FILE), &json_text(&meta)?)?;
    Ok(summary)
}

fn unix(t: SystemTime) -> f64 {
    t.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Writes through a temporary name and renames, so readers never see a
/// half-written file.
fn write_file(path: &Path, text: &str) -> Result<()> {
    let tmp: PathBuf = path.with_extension("partial");
    std::fs::write(&tmp, text).map_err(|e| HarnessError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}
