mod common;

use codeqe_core::evaluation::{EvalReport, Scope};
use codeqe_core::pipeline::{Pipeline, PipelineError, Stage};
use codeqe_core::Method;

fn read_report(out: &std::path::Path) -> EvalReport {
    serde_json::from_str(&std::fs::read_to_string(out.join("evaluate/report.json")).unwrap()).unwrap()
}

#[test]
fn oracle_run_is_perfect_and_reproducible() {
    let ws = tempfile::tempdir().unwrap();
    let config = common::golden_workspace(ws.path(), "oracle-stub");
    let out_a = ws.path().join("a");
    let out_b = ws.path().join("b");
    let cfg = common::load(&config, &["audit_prompts=true"]);

    let outcomes = Pipeline::new(cfg.clone(), Some(out_a.clone())).unwrap().run_all().unwrap();
    assert!(outcomes.iter().all(|o| !o.skipped));
    Pipeline::new(cfg.clone(), Some(out_b.clone())).unwrap().run_all().unwrap();
    assert_eq!(common::tree(&out_a), common::tree(&out_b));

    let again = Pipeline::new(cfg, Some(out_a.clone())).unwrap().run_all().unwrap();
    assert!(again.iter().all(|o| o.skipped));

    let report = read_report(&out_a);
    for row in &report.rows {
        let v = row.value.expect("defined metric");
        match row.method {
            Method::Els => assert!((-1.0..=1.0).contains(&v)),
            Method::Tls => assert!((0.0..=1.0).contains(&v)),
            _ => assert_eq!(v, 1.0, "{row:?}"),
        }
    }
    assert_eq!(report.rows.len(), 6 * 2);
    let sweep = std::fs::read_to_string(out_a.join("evaluate/sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 3 * 5 * 2);
    let table = std::fs::read_to_string(out_a.join("report/table.csv")).unwrap();
    assert!(table.starts_with("method,k,syn-test G-nDCG,syn-test L-nDCG\nZS,,1.0000,1.0000\n"), "{table}");
    let prompts = std::fs::read_to_string(out_a.join("predict/prompts.jsonl")).unwrap();
    assert!(prompts.contains("\"method\":\"ZS\"") && prompts.contains("\"method\":\"FS-PS\""));
    assert!(report.rows.iter().any(|r| r.scope == Scope::Local));
}

#[test]
fn stages_refuse_missing_upstream() {
    let ws = tempfile::tempdir().unwrap();
    let config = common::golden_workspace(ws.path(), "stub");
    let p = Pipeline::new(common::load(&config, &[]), Some(ws.path().join("out"))).unwrap();
    for s in [Stage::Ingest, Stage::Generate, Stage::Label] {
        p.run_stage(s).unwrap();
    }
    let err = p.run_stage(Stage::Predict).unwrap_err();
    assert!(matches!(err, PipelineError::Missing { stage: Stage::Index }));
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("index artifact missing"));
}

#[test]
fn config_change_invalidates_downstream() {
    let ws = tempfile::tempdir().unwrap();
    let config = common::golden_workspace(ws.path(), "stub");
    let out = ws.path().join("out");
    Pipeline::new(common::load(&config, &["methods=[\"ZS\"]"]), Some(out.clone())).unwrap().run_all().unwrap();

    let changed = Pipeline::new(common::load(&config, &["methods=[\"ZS\", \"ELS\"]"]), Some(out.clone())).unwrap();
    let err = changed.run_stage(Stage::Predict).unwrap_err();
    assert!(matches!(err, PipelineError::Stale { stage: Stage::Ingest, .. }), "{err}");
    assert!(matches!(changed.run_stage(Stage::Report), Err(PipelineError::Stale { .. })));

    // rebuilding the chain under the new config succeeds
    changed.run_all().unwrap();
    assert_eq!(read_report(&out).rows.len(), 4);
}

#[test]
fn tampered_artifacts_are_detected() {
    let ws = tempfile::tempdir().unwrap();
    let config = common::golden_workspace(ws.path(), "stub");
    let out = ws.path().join("out");
    let p = Pipeline::new(common::load(&config, &["methods=[\"ZS\"]"]), Some(out.clone())).unwrap();
    p.run_all().unwrap();
    std::fs::write(out.join("predict/scores.jsonl"), "").unwrap();
    assert!(matches!(p.run_stage(Stage::Tune), Err(PipelineError::Stale { stage: Stage::Predict, .. })));
    assert!(matches!(p.run_stage(Stage::Report), Err(PipelineError::MixedProvenance(_))));
    // rerunning predict restores a consistent chain
    assert!(!p.run_stage(Stage::Predict).unwrap().skipped);
    assert!(p.run_all().unwrap().iter().take(5).all(|o| o.skipped));
}

#[test]
fn missing_out_dir_is_a_config_error() {
    let ws = tempfile::tempdir().unwrap();
    let config = common::golden_workspace(ws.path(), "stub");
    let err = Pipeline::new(common::load(&config, &[]), None).err().unwrap();
    assert_eq!(err.exit_code(), 2);
}
