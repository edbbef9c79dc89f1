use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gplfm"))
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(verb: &str, cfg: &Path, out: &Path, seed: Option<u64>) -> std::process::Output {
    let mut cmd = bin();
    cmd.arg(verb).arg("--config").arg(cfg).arg("--out").arg(out);
    if let Some(s) = seed {
        cmd.arg("--seed").arg(s.to_string());
    }
    cmd.output().unwrap()
}

#[test]
fn simulate_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = run("simulate", &config("impact_all_acc.toml"), dir.path(), Some(3));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let meas = std::fs::read_to_string(dir.path().join("measurements.csv")).unwrap();
    let header = meas.lines().next().unwrap();
    assert!(header.starts_with("time,acc_1,"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 3);
    assert_eq!(summary["verb"], "simulate");
    assert_eq!(summary["schema_version"], 1);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert!(run("diagnose", &config("seismic_pulse.toml"), d.path(), Some(9)).status.success());
        assert!(run("simulate", &config("seismic_pulse.toml"), d.path(), Some(9)).status.success());
    }
    for name in ["summary.json", "measurements.csv", "excitation.csv", "truth_displacement.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn dkf_on_ground_motion_exits_with_degeneracy_code() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("seismic_pulse.toml"))
        .unwrap()
        .replace("method = \"gplfm\"", "method = \"dkf\"");
    let cfg = dir.path().join("dkf.toml");
    std::fs::write(&cfg, text).unwrap();
    let out = run("estimate", &cfg, &dir.path().join("out"), None);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degeneracy"));
}

#[test]
fn bad_config_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[model]\nkind = \"tower\"\n").unwrap();
    assert_eq!(run("simulate", &cfg, dir.path(), None).status.code(), Some(2));
    assert_eq!(run("simulate", &dir.path().join("absent.toml"), dir.path(), None).status.code(), Some(2));
    let usage = bin().arg("estimate").output().unwrap();
    assert_eq!(usage.status.code(), Some(2));
}
