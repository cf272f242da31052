use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::{json, Value};

use critlab::config::{ExperimentConfig, Overrides};
use critlab::{ExperimentKind, HarnessError};

fn config(experiment: &str, parameters: Value, replicas: usize, out: &Path) -> ExperimentConfig {
    let doc = json!({
        "experiment": experiment,
        "parameters": parameters,
        "seed": 77,
        "replicas": replicas,
        "output_path": out,
    });
    ExperimentConfig::from_value(doc, &Overrides::default()).unwrap()
}

fn data_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(String::from)
        .collect()
}

fn listing(dir: &Path) -> BTreeSet<String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect()
}

#[test]
fn config_errors_are_reported_together() {
    let doc = json!({"experiment": "crossing_sweep", "parameters": {"r": [1.0]}, "replicas": 0, "colour": 1});
    let err = ExperimentConfig::from_value(doc, &Overrides::default()).unwrap_err();
    for key in [
        "seed",
        "output_path",
        "parameters.model",
        "parameters.l",
        "parameters.n_samples",
    ] {
        assert!(err.missing.iter().any(|m| m == key), "{key} not reported in {err}");
    }
    let invalid: Vec<&str> = err.invalid.iter().map(|(k, _)| k.as_str()).collect();
    assert!(invalid.contains(&"replicas"), "{err}");
    assert!(invalid.contains(&"colour"), "{err}");
}

#[test]
fn every_experiment_lists_its_required_parameters() {
    for kind in ExperimentKind::ALL {
        let doc = json!({"experiment": kind.name(), "parameters": {}, "seed": 1, "output_path": "x"});
        let err = ExperimentConfig::from_value(doc, &Overrides::default()).unwrap_err();
        assert!(!err.missing.is_empty(), "{kind}");
        assert!(
            err.missing.iter().all(|m| m.starts_with("parameters.")),
            "{kind}: {err}"
        );
    }
}

#[test]
fn overrides_replace_document_values() {
    let doc = json!({"experiment": "cardy_table", "parameters": {"r_min": 0.5, "r_max": 2.0, "n": 3}, "seed": 1, "output_path": "a"});
    let ov = Overrides {
        seed: Some(9),
        replicas: Some(3),
        output_path: Some("b".into()),
        ..Overrides::default()
    };
    let cfg = ExperimentConfig::from_value(doc, &ov).unwrap();
    assert_eq!((cfg.seed, cfg.replicas), (9, 3));
    assert_eq!(cfg.output_path, Path::new("b"));
}

#[test]
fn replica_count_does_not_change_the_data() {
    let cases = [
        (
            "crossing_sweep",
            json!({"model": {"lattice": "triangular", "mode": "site", "p": "critical"}, "r": [1.0, 2.0], "l": 24, "n_samples": 301}),
            "crossing_sweep.csv",
        ),
        (
            "sle_sample",
            json!({"kappa": 3.0, "steps": 200, "dt": 1e-3, "n": 5, "stride": 4}),
            "traces.csv",
        ),
        (
            "ising_observable",
            json!({"rows": 4, "cols": 4, "samples": 2000}),
            "observable.csv",
        ),
    ];
    for (name, params, file) in cases {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let sa = critlab::run(&config(name, params.clone(), 1, a.path())).unwrap();
        let sb = critlab::run(&config(name, params, 3, b.path())).unwrap();
        assert_eq!(
            data_lines(&a.path().join(file)),
            data_lines(&b.path().join(file)),
            "{name}"
        );
        assert_eq!(sa.results, sb.results, "{name}");
    }
}

#[test]
fn outputs_stay_inside_the_output_path() {
    let root = tempfile::tempdir().unwrap();
    let out = root.path().join("nested").join("out");
    let summary = critlab::run(&config(
        "cardy_table",
        json!({"r_min": 0.25, "r_max": 4.0, "n": 9}),
        1,
        &out,
    ))
    .unwrap();
    assert_eq!(listing(root.path()), BTreeSet::from(["nested".to_string()]));
    assert_eq!(
        listing(&root.path().join("nested")),
        BTreeSet::from(["out".to_string()])
    );
    let written = listing(&out);
    for f in &summary.files {
        assert!(written.contains(f), "{f} missing");
    }
    assert!(written.iter().all(|f| !f.ends_with(".partial")));
    assert!(written.contains(critlab::output::SUMMARY_FILE));
    assert!(written.contains(critlab::output::META_FILE));
}

#[test]
fn bad_config_writes_nothing() {
    let root = tempfile::tempdir().unwrap();
    let doc = json!({"experiment": "cardy_table", "parameters": {"r_min": 2.0, "r_max": 1.0, "n": 3}, "seed": 1, "output_path": root.path().join("out")});
    let err = ExperimentConfig::from_value(doc, &Overrides::default()).map(|c| critlab::run(&c));
    assert!(matches!(err, Err(_) | Ok(Err(HarnessError::Config(_)))));
    assert!(listing(root.path()).is_empty());
}

fn cli(args: &[&str], cwd: &Path) -> (i32, String, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_critlab"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap();
    (
        o.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&o.stdout).into_owned(),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let good = d.join("good.json");
    fs::write(
        &good,
        json!({"experiment": "cardy_table", "parameters": {"r_min": 0.5, "r_max": 2.0, "n": 5}, "seed": 1, "output_path": "out"}).to_string(),
    )
    .unwrap();
    let (code, stdout, _) = cli(&["cardy_table", "--config", good.to_str().unwrap(), "--seed", "4"], d);
    assert_eq!(code, 0);
    let summary: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(summary["provenance"]["seed"], 4);
    assert!(d.join("out").join("cardy_table.csv").is_file());

    let bad = d.join("bad.json");
    fs::write(
        &bad,
        json!({"experiment": "cardy_table", "parameters": {"n": 5}}).to_string(),
    )
    .unwrap();
    let (code, _, stderr) = cli(&["cardy_table", "--config", bad.to_str().unwrap()], d);
    assert_eq!(code, 2);
    for key in ["parameters.r_min", "parameters.r_max", "seed", "output_path"] {
        assert!(stderr.contains(key), "{key} not in {stderr}");
    }

    assert_eq!(cli(&["no_such_experiment", "--config", good.to_str().unwrap()], d).0, 2);
    assert_eq!(cli(&["cardy_table"], d).0, 2);

    let empty = d.join("fixtures");
    fs::create_dir(&empty).unwrap();
    assert_eq!(cli(&["verify", "--fixtures", empty.to_str().unwrap()], d).0, 3);
    let (code, stdout, _) = cli(&["verify"], d);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.lines().all(|l| l.starts_with("PASS ")));
}
