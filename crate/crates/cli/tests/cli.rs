use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn spikegrid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spikegrid"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, doc: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, doc).unwrap();
    path.display().to_string()
}

/// Every object key of `doc` must be declared at the same place in `schema`.
fn undeclared(doc: &Value, schema: &Value, at: &str, missing: &mut Vec<String>) {
    let alternatives: Vec<&Value> = match schema.get("oneOf") {
        Some(Value::Array(v)) => v.iter().collect(),
        _ => vec![schema],
    };
    match doc {
        Value::Object(map) => {
            let Some(props) = alternatives.iter().find_map(|s| s.get("properties")) else {
                missing.push(format!("{at} (object without properties)"));
                return;
            };
            for (k, v) in map {
                match props.get(k) {
                    Some(s) => undeclared(v, s, &format!("{at}.{k}"), missing),
                    None => missing.push(format!("{at}.{k}")),
                }
            }
        }
        Value::Array(items) => {
            if let Some(s) = alternatives.iter().find_map(|s| s.get("items")) {
                for v in items {
                    undeclared(v, s, &format!("{at}[]"), missing);
                }
            }
        }
        _ => {}
    }
}

#[test]
fn list_names_every_bundled_config() {
    let out = spikegrid(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in spikegrid::config::bundled_names() {
        assert!(text.contains(name), "{name} missing from {text}");
    }
}

#[test]
fn schema_declares_every_field_of_the_bundled_plans() {
    let schema: Value =
        serde_json::from_str(include_str!("../../../docs/config.schema.json")).unwrap();
    for name in spikegrid::config::bundled_names() {
        let out = spikegrid(&["validate", "--config", &format!("builtin:{name}")]);
        assert!(
            out.status.success(),
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
        let mut missing = Vec::new();
        undeclared(&doc, &schema, name, &mut missing);
        assert!(missing.is_empty(), "undeclared fields: {missing:?}");
    }
}

#[test]
fn invalid_configs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let degenerate = write_config(
        dir.path(),
        r#"{"snn": {"kernel": {"tau_m": 0.01, "tau_syn": 0.01}}, "experiment": {"kind": "baseline"}}"#,
    );
    let out = spikegrid(&["validate", "--config", &degenerate]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tau_syn"));

    let broken = write_config(dir.path(), "{ not json");
    assert_eq!(
        spikegrid(&["validate", "--config", &broken]).status.code(),
        Some(2)
    );

    let unknown = write_config(dir.path(), r#"{"plant": {"bogus": 1}}"#);
    assert_eq!(
        spikegrid(&["validate", "--config", &unknown]).status.code(),
        Some(2)
    );
}

#[test]
fn baseline_run_writes_manifest_results_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("baseline");
    let out = spikegrid(&[
        "run",
        "--config",
        "builtin:baseline",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for file in [
        "manifest.json",
        "plan.json",
        "report.json",
        "trace.csv",
        "events.csv",
    ] {
        assert!(out_dir.join(file).is_file(), "{file} missing");
    }
    let manifest: Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["kind"], "baseline");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);

    let out = spikegrid(&["summarize", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    assert!(dir.path().join("summary.csv").is_file());
    assert!(dir.path().join("summary.txt").is_file());
}

#[test]
fn failed_embedded_check_exits_with_three() {
    // Without the secondary integrator unequal loads are never shared.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"plant": {"nodes": [{"load_conductance": 0.1}, {"load_conductance": 0.4}]},
            "control": {"ki_secondary": 0.0, "duration": 0.6},
            "experiment": {"kind": "baseline"}}"#,
    );
    let out_dir = dir.path().join("unshared");
    let out = spikegrid(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("[FAIL]"));
    assert!(out_dir.join("report.json").is_file());
}

#[test]
fn seed_flag_replaces_the_seed_axis() {
    let out = spikegrid(&[
        "validate",
        "--config",
        "builtin:load-step-sweep",
        "--seed",
        "9",
    ]);
    assert!(out.status.success());
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["experiment"]["seeds"], serde_json::json!([9]));
}
