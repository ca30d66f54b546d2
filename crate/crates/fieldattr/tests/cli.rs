use std::path::Path;
use std::process::{Command, Output};

fn fieldattr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fieldattr")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn synth(dir: &Path) -> String {
    let out = fieldattr(&["synth", "--out", dir.to_str().unwrap(), "--stocks", "6", "--days", "900", "--seed", "2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("config.toml").to_str().unwrap().to_string()
}

#[test]
fn build_succeeds_and_prints_the_observable() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(dir.path());
    let out = fieldattr(&["build", "--config", &config]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# observables\ndate,psi1,vix,log_vix\n"), "{text}");
}

#[test]
fn flags_work_without_a_config_and_write_files() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let prices = dir.path().join("prices.csv");
    let vix = dir.path().join("vix.csv");
    let report = dir.path().join("r");
    let out = fieldattr(&[
        "residual",
        "--prices",
        prices.to_str().unwrap(),
        "--vix",
        vix.to_str().unwrap(),
        "--horizons",
        "10,20",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(report.join("residual_state.csv").is_file());
    assert!(report.join("manifest.json").is_file());
}

#[test]
fn a_failing_stage_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(dir.path());
    let out = fieldattr(&["granger", "--config", &config, "--max-lag", "5000"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage granger failed"));
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&fieldattr(&["fit"])), 2);
    let missing = dir.path().join("nope.toml");
    assert_eq!(code(&fieldattr(&["run-all", "--config", missing.to_str().unwrap()])), 2);
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[input]\nprices = \"p.csv\"\nvix = \"v.csv\"\nbogus = 1\n").unwrap();
    assert_eq!(code(&fieldattr(&["run-all", "--config", bad.to_str().unwrap()])), 2);
    assert_eq!(code(&fieldattr(&["no-such-command"])), 2);
}
