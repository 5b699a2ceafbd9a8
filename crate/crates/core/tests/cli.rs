use std::path::Path;
use std::process::Command;

use morlicz::cli::{run, EXIT_INPUT, EXIT_OK};

fn invoke(args: &[&str], out: &Path) -> (i32, String) {
    let mut argv = vec!["morlicz"];
    argv.extend_from_slice(args);
    let dir = out.to_str().unwrap();
    argv.extend_from_slice(&["--out", dir]);
    let mut buf = Vec::new();
    let code = run(argv, &mut buf);
    (code, String::from_utf8(buf).unwrap())
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn gtilde_prints_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = invoke(&["gtilde", "--family", "powerp:2", "--a", "1"], dir.path());
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.trim().parse::<f64>().unwrap(), 1.0);
    let (_, out) = invoke(&["gtilde", "--family", "power:2", "--a", "1", "--dim", "2"], dir.path());
    assert!((out.trim().parse::<f64>().unwrap() - std::f64::consts::FRAC_PI_4).abs() < 1e-9);
    let m = manifest(dir.path());
    assert_eq!(m["command"], "gtilde");
    assert_eq!(m["family"], "power:2");
    assert!(dir.path().join("gtilde.csv").exists());
}

#[test]
fn bad_input_exits_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(invoke(&["gtilde", "--family", "nonsense"], dir.path()).0, EXIT_INPUT);
    assert_eq!(invoke(&["modular", "--s", "1.5"], dir.path()).0, EXIT_INPUT);
    assert_eq!(invoke(&["frobnicate"], dir.path()).0, EXIT_INPUT);
}

#[test]
fn local_solve_reports_energy_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = invoke(&["solve", "--local"], dir.path());
    assert_eq!(code, EXIT_OK);
    let energy: f64 = out.lines().next().unwrap().strip_prefix("energy ").unwrap().parse().unwrap();
    assert!((energy + 1.0 / 3.0).abs() < 1e-4, "{energy}");
    for name in ["solution.csv", "solution.json", "solve.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let m = manifest(dir.path());
    assert_eq!(m["grid"]["N"], 256);
    assert_eq!(m["config_sha"].as_str().unwrap().len(), 64);
}

#[test]
fn config_file_sets_defaults_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"family": "powerp:2", "a": [2.0]}"#).unwrap();
    let cfg = cfg.to_str().unwrap();
    let (code, out) = invoke(&["--config", cfg, "gtilde"], dir.path());
    assert_eq!(code, EXIT_OK);
    assert_eq!(out.trim().parse::<f64>().unwrap(), 4.0);
    let sha_config = manifest(dir.path())["config_sha"].clone();
    let (_, out) = invoke(&["--config", cfg, "gtilde", "--family", "power:2"], dir.path());
    assert_eq!(out.trim().parse::<f64>().unwrap(), 2.0);
    assert_ne!(manifest(dir.path())["config_sha"], sha_config);

    std::fs::write(dir.path().join("bad.json"), r#"{"famly": "power:2"}"#).unwrap();
    let bad = dir.path().join("bad.json");
    assert_eq!(invoke(&["--config", bad.to_str().unwrap(), "gtilde"], dir.path()).0, EXIT_INPUT);
}

#[test]
fn binary_runs_and_sets_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_morlicz");
    let ok = Command::new(bin).args(["gtilde", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(ok.status.code(), Some(EXIT_OK));
    assert_eq!(String::from_utf8_lossy(&ok.stdout).trim(), "0.5");
    let bad = Command::new(bin).args(["gtilde", "--family", "x", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(bad.status.code(), Some(EXIT_INPUT));
    assert!(!bad.stderr.is_empty());
}
