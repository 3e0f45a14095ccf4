use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn ionmux(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ionmux"));
    cmd.args(args).env_remove("IONMUX_OUT");
    if let Some(p) = out_env {
        cmd.env("IONMUX_OUT", p);
    }
    cmd.output().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_report_and_series() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenarios().join("charge_injection.json");
    let o = ionmux(&["run", path_str(&sc), "--out", path_str(dir.path())], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run = dir.path().join("charge-injection-dc3");
    assert!(run.join("report.json").is_file());
    assert!(run.join("events.csv").is_file());
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenarios().join("refresh_budget.json");
    let o = ionmux(&["run", path_str(&sc)], Some(dir.path()));
    assert!(o.status.success());
    assert!(dir.path().join("refresh-budget-98/report.json").is_file());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sc = scenarios().join("heating_fit.json");
    for d in [&a, &b] {
        assert!(ionmux(&["run", path_str(&sc), "--out", path_str(d.path()), "--seed", "3"], None).status.success());
    }
    for f in ["report.json", "rates.csv"] {
        let p = Path::new("heating-fit-synthetic").join(f);
        assert_eq!(fs::read(a.path().join(&p)).unwrap(), fs::read(b.path().join(&p)).unwrap());
    }
    let report = fs::read_to_string(a.path().join("heating-fit-synthetic/report.json")).unwrap();
    assert!(report.contains("\"seed\": 3"));
}

#[test]
fn validate_exit_codes() {
    let ok = ionmux(&["validate", path_str(&scenarios().join("transport.json"))], None);
    assert_eq!(ok.status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"id": "b", "kind": "charge-injection", "params": {"electrode": "3", "voltages": {"3": -12}}}"#).unwrap();
    let o = ionmux(&["validate", path_str(&bad)], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.json"));

    let missing = ionmux(&["validate", path_str(&dir.path().join("nope.json"))], None);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn pipeline_error_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("t.json");
    fs::write(
        &sc,
        r#"{"id": "t", "kind": "transport", "layout": "trap1",
            "params": {"start_um": 0, "end_um": 10, "step_um": 10, "freq_mhz": 40,
                       "subset": {"rule": "fixed", "ids": ["1", "2", "3"]}}}"#,
    )
    .unwrap();
    let o = ionmux(&["run", path_str(&sc), "--out", path_str(dir.path())], None);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("waveforms"));
}

#[test]
fn sweep_writes_one_directory_per_value_and_a_merged_summary() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenarios().join("transport.json");
    let o = ionmux(
        &["run", path_str(&sc), "--out", path_str(dir.path()), "--sweep", "freq_mhz=0.8,1.0"],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for v in ["0.8", "1.0"] {
        assert!(dir.path().join(format!("transport-trap2__freq_mhz={v}/profile.csv")).is_file());
    }
    let merged: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("transport-trap2__sweep.json")).unwrap()).unwrap();
    assert_eq!(merged["runs"].as_array().unwrap().len(), 2);
    assert_eq!(merged["param"], "freq_mhz");

    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/schemas/sweep.schema.json");
    let schema: serde_json::Value = serde_json::from_str(&fs::read_to_string(schema_path).unwrap()).unwrap();
    let keys = |v: &serde_json::Value| {
        let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
        k.sort();
        k
    };
    let required = |v: &serde_json::Value| {
        let mut k: Vec<String> = v["required"].as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_string()).collect();
        k.sort();
        k
    };
    assert_eq!(keys(&merged), required(&schema));
    for run in merged["runs"].as_array().unwrap() {
        assert_eq!(keys(run), required(&schema["properties"]["runs"]["items"]));
    }
}

#[test]
fn malformed_sweep_is_a_validation_error() {
    let sc = scenarios().join("transport.json");
    let o = ionmux(&["run", path_str(&sc), "--sweep", "freq_mhz"], None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn presets_list() {
    let o = ionmux(&["presets", "list"], None);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for line in ["layout\ttrap1", "layout\ttrap2", "circuit\ttrap1"] {
        assert!(text.contains(line), "{text}");
    }
}
