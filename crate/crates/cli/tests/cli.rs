use std::path::Path;
use std::process::{Command, Output};

fn codeqe(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_codeqe"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn synth(dir: &Path) {
    let out = codeqe(dir, &["synth", ".", "--problems", "12", "--test-problems", "8"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn full_run_then_idempotent_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let run = codeqe(dir.path(), &["--config", "run.toml", "run"]);
    assert!(run.status.success(), "{}", stderr(&run));
    let report = dir.path().join("out/evaluate/report.csv");
    let before = std::fs::read(&report).unwrap();
    assert!(before.starts_with(b"method,test_set,scope,k,alpha,metric,value,n_excluded_problems\n"));

    let again = codeqe(dir.path(), &["--config", "run.toml", "evaluate"]);
    assert!(again.status.success());
    assert!(String::from_utf8_lossy(&again.stdout).contains("evaluate: up to date"));
    assert_eq!(std::fs::read(&report).unwrap(), before);
    assert!(dir.path().join("out/report/table.csv").exists());
}

#[test]
fn out_flag_and_seed_flag() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let a = codeqe(dir.path(), &["--config", "run.toml", "--out", "a", "--seed", "5", "--set", "methods=[\"ZS\"]", "run"]);
    assert!(a.status.success(), "{}", stderr(&a));
    let b = codeqe(dir.path(), &["--config", "run.toml", "--out", "b", "--seed", "6", "--set", "methods=[\"ZS\"]", "run"]);
    assert!(b.status.success(), "{}", stderr(&b));
    let split = |d: &str| std::fs::read_to_string(dir.path().join(d).join("ingest/split.json")).unwrap();
    assert_ne!(split("a"), split("b"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn predict_before_index_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    for stage in ["ingest", "generate", "label"] {
        assert!(codeqe(dir.path(), &["--config", "run.toml", stage]).status.success());
    }
    let out = codeqe(dir.path(), &["--config", "run.toml", "predict"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("index artifact missing"), "{}", stderr(&out));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let bad = codeqe(dir.path(), &["--config", "run.toml", "--set", "split.dev_fraction=2.0", "ingest"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("split.dev_fraction"));
    assert_eq!(codeqe(dir.path(), &["ingest"]).status.code(), Some(2));
    assert_eq!(codeqe(dir.path(), &["--config", "missing.toml", "ingest"]).status.code(), Some(2));
    assert_eq!(codeqe(dir.path(), &["no-such-command"]).status.code(), Some(2));
}

#[test]
fn unreachable_backend_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let endpoint = format!("backends.predictor.endpoint=\"http://127.0.0.1:{port}/v1\"");
    let args = [
        "--config",
        "run.toml",
        "--set",
        "methods=[\"ZS\"]",
        "--set",
        &endpoint,
        "--set",
        "backends.predictor.retry.attempts=2",
        "--set",
        "backends.predictor.retry.base_delay_ms=1",
        "run",
    ];
    let out = codeqe(dir.path(), &args);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    assert!(stderr(&out).contains(&format!("127.0.0.1:{port}")), "{}", stderr(&out));
}
