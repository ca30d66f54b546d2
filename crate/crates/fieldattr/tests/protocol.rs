use std::path::Path;

use fieldattr::report::StageStatus;
use fieldattr::synth::write_world;
use fieldattr::{emit, run_protocol, AppError, ProtocolConfig, ProtocolReport, Stage, Table, Value};
use fieldattr_core::synth::PlantedMarketConfig;
use proptest::prelude::*;

fn world(dir: &Path) -> ProtocolConfig {
    let market = PlantedMarketConfig { n_stocks: 8, n_days: 1200, ..PlantedMarketConfig::default() };
    write_world(dir, &market, 5).unwrap()
}

fn status(report: &ProtocolReport, stage: Stage) -> Option<&StageStatus> {
    report.manifest.stages.iter().find(|s| s.stage == stage.name()).map(|s| &s.status)
}

#[test]
fn every_stage_runs_and_the_report_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = world(dir.path());
    let report = run_protocol(&cfg);
    for s in &report.manifest.stages {
        assert_eq!(s.status, StageStatus::Ok, "stage {}", s.stage);
    }
    assert_eq!(report.manifest.stages.len(), Stage::ALL.len());
    for name in ["observables", "model_comparison", "placebo", "granger", "decomposition", "acf", "window_sweep", "oos", "twod", "residual_state"]
    {
        assert!(report.table(name).is_some(), "missing table {name}");
    }

    let out = dir.path().join("report");
    let written = emit(&report, &out).unwrap();
    assert_eq!(written.len(), report.files().len());
    for t in &report.tables {
        let text = std::fs::read_to_string(out.join(format!("{}.csv", t.name))).unwrap();
        assert_eq!(&Table::parse(t.name.clone(), &text).unwrap(), t);
    }
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["inputs"]["prices"].as_str().unwrap().len(), 64);
    assert!(out.join("summary.json").is_file());
}

#[test]
fn observables_alone_give_one_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = world(dir.path());
    cfg.stages = vec![Stage::Observables];
    let report = run_protocol(&cfg);
    assert!(!report.failed());
    assert_eq!(report.tables.len(), 1);
    let t = &report.tables[0];
    assert_eq!(t.columns, ["date", "psi1", "vix", "log_vix"]);
    assert!(t.rows.iter().all(|r| matches!(r[1], Value::Num(x) if x > 0.0 && x <= 1.0)));
}

#[test]
fn failed_observables_skip_everything_downstream() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = world(dir.path());
    cfg.window = 100_000;
    cfg.stages = vec![Stage::Observables, Stage::Models, Stage::Granger];
    let report = run_protocol(&cfg);
    assert!(report.failed());
    assert!(matches!(status(&report, Stage::Observables), Some(StageStatus::Failed(_))));
    for stage in [Stage::Models, Stage::Granger] {
        match status(&report, stage) {
            Some(StageStatus::Skipped(m)) => assert!(m.contains("did not succeed"), "{m}"),
            other => panic!("{stage:?}: {other:?}"),
        }
    }
    assert!(report.tables.is_empty());
}

#[test]
fn diagnostics_need_models() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = world(dir.path());
    cfg.stages = vec![Stage::Observables, Stage::Diagnostics];
    let report = run_protocol(&cfg);
    match status(&report, Stage::Diagnostics) {
        Some(StageStatus::Skipped(m)) => assert!(m.contains("models is not enabled"), "{m}"),
        other => panic!("{other:?}"),
    }
    assert!(!report.failed());
}

#[test]
fn a_failing_stage_does_not_stop_the_others() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = world(dir.path());
    cfg.granger.max_lag = 10_000;
    cfg.stages = vec![Stage::Observables, Stage::Granger, Stage::Residual];
    let report = run_protocol(&cfg);
    assert!(matches!(status(&report, Stage::Granger), Some(StageStatus::Failed(_))));
    assert_eq!(status(&report, Stage::Residual), Some(&StageStatus::Ok));
    assert!(report.table("residual_state").is_some());
}

#[test]
fn emitting_under_a_file_is_an_output_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let err = emit(&ProtocolReport::default(), &blocker.join("out")).unwrap_err();
    assert!(matches!(err, AppError::Output { .. }));
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn config_written_by_synth_loads_with_relative_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = world(dir.path());
    assert!(cfg.input.prices.is_absolute() || cfg.input.prices.starts_with(dir.path()));
    let again = ProtocolConfig::load(&dir.path().join("config.toml")).unwrap();
    assert_eq!(again.to_toml(), cfg.to_toml());
}

fn cell() -> impl Strategy<Value = Value> {
    prop_oneof![
        any::<i64>().prop_map(Value::Int),
        any::<f64>().prop_filter("finite", |x| x.is_finite()).prop_map(Value::Num),
        "[a-z][a-z ,\"]{0,10}"
            .prop_filter("text must not read as a number", |s| s.parse::<f64>().is_err())
            .prop_map(Value::Text),
        Just(Value::Missing),
    ]
}

proptest! {
    #[test]
    fn tables_survive_csv(width in 1usize..5, rows in prop::collection::vec(prop::collection::vec(cell(), 5), 0..20)) {
        let columns: Vec<String> = (0..width).map(|j| format!("c{j}")).collect();
        let refs: Vec<&str> = columns.iter().map(String::as_str).collect();
        let mut t = Table::new("t", &refs);
        for r in rows {
            // A row of only missing cells in a single column is a blank CSV line.
            if width == 1 && r[0] == Value::Missing {
                continue;
            }
            t.push(r[..width].to_vec());
        }
        prop_assert_eq!(Table::parse("t", &t.to_csv()).unwrap(), t);
    }
}
