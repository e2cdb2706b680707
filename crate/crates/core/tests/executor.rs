use codeqe_core::executor::{label_corpus, label_solution, ProcessRunner, RunnerRegistry, SandboxConfig, StubRunner};
use codeqe_core::{CandidateSolution, ProblemSpec, TestSuite, Verdict};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

/// Minimal protocol speaker used as a stand-in interpreter runner.
const TOY_RUNNER: &str = r#"
import json, sys
req = json.load(sys.stdin)
def reply(verdict, idx=None, msg=""):
    sys.stdout.write(json.dumps({"verdict": verdict, "failed_case_index": idx, "message": msg}))
    sys.exit(0)
ns = {}
try:
    exec(req["setup"] + "\n" + req["code"], ns)
except BaseException as e:
    reply("error", None, "%s: %s" % (type(e).__name__, e))
for i, case in enumerate(req["tests"]):
    try:
        exec(case, ns)
    except BaseException as e:
        reply("fail", i, "%s: %s" % (type(e).__name__, e))
reply("pass")
"#;

fn problem(lang: &str) -> ProblemSpec {
    ProblemSpec {
        id: "add".into(),
        description: "Add two numbers.".into(),
        entry_point: Some("add".into()),
        language: lang.into(),
        setup_code: None,
    }
}

fn suite(cases: &[&str]) -> TestSuite {
    TestSuite { problem_id: "add".into(), cases: cases.iter().map(|c| c.to_string()).collect(), setup_code: None }
}

fn sol(id: &str, code: &str) -> CandidateSolution {
    CandidateSolution {
        problem_id: "add".into(),
        solution_id: id.into(),
        code: code.into(),
        rank_hint: None,
        generator_tag: "test".into(),
    }
}

fn sh(script: &str) -> ProcessRunner {
    ProcessRunner::new("sh", vec!["-c".into(), script.into()]).with_grace(Duration::from_millis(200))
}

fn registry(runner: ProcessRunner) -> RunnerRegistry {
    let mut r = RunnerRegistry::new();
    r.register("shell", Arc::new(runner));
    r
}

fn cfg(timeout_s: f64) -> SandboxConfig {
    SandboxConfig { timeout_s, ..SandboxConfig::default() }
}

fn python3() -> bool {
    Command::new("python3").arg("--version").output().is_ok_and(|o| o.status.success())
}

#[test]
fn well_formed_pass_response() {
    let r = registry(sh(r#"cat >/dev/null; printf '{"verdict":"pass","failed_case_index":null,"message":""}'"#));
    let l = label_solution(&problem("shell"), &sol("s1", "x"), &suite(&["t"]), &cfg(5.0), &r);
    assert_eq!(l.verdict, Verdict::Pass, "{l:?}");
    assert_eq!(l.detail, None);
}

#[test]
fn fail_response_keeps_case_index() {
    let r = registry(sh(r#"cat >/dev/null; printf '{"verdict":"fail","failed_case_index":1,"message":"AssertionError"}'"#));
    let l = label_solution(&problem("shell"), &sol("s1", "x"), &suite(&["a", "b"]), &cfg(5.0), &r);
    assert_eq!(l.verdict, Verdict::Fail);
    assert!(l.detail.unwrap().starts_with("case 1 failed"));
}

#[test]
fn protocol_violations_are_infra_errors() {
    for script in [
        "cat >/dev/null; echo not json",
        r#"cat >/dev/null; printf '{"verdict":"pass","failed_case_index":null,"message":""}'; exit 3"#,
        "cat >/dev/null; head -c 100000 /dev/zero | tr '\\0' a",
    ] {
        let r = registry(sh(script));
        let l = label_solution(&problem("shell"), &sol("s1", "x"), &suite(&["t"]), &cfg(5.0), &r);
        assert_eq!(l.verdict, Verdict::InfraError, "{script}: {l:?}");
        assert!(l.detail.is_some());
    }
}

#[test]
fn hung_runner_is_killed_as_timeout() {
    let r = registry(sh("cat >/dev/null; while :; do :; done"));
    let start = Instant::now();
    let l = label_solution(&problem("shell"), &sol("s1", "x"), &suite(&["t"]), &cfg(0.5), &r);
    assert_eq!(l.verdict, Verdict::Timeout);
    assert!(start.elapsed() < Duration::from_secs(3), "{:?}", start.elapsed());
}

#[test]
fn missing_runner_is_infra_error() {
    let l = label_solution(&problem("cobol"), &sol("s1", "x"), &suite(&["t"]), &cfg(1.0), &RunnerRegistry::new());
    assert_eq!(l.verdict, Verdict::InfraError);
}

#[test]
fn writes_stay_inside_a_removed_workdir() {
    let root = tempfile::tempdir().unwrap();
    let r = registry(sh(
        r#"cat >/dev/null; echo x > here.txt; echo y > "$HOME/home.txt"; echo z > "$TMPDIR/tmp.txt"; printf '{"verdict":"pass","failed_case_index":null,"message":"%s"}' "$CODEQE_NETWORK""#,
    ));
    let cfg = SandboxConfig { workdir_root: Some(root.path().to_path_buf()), ..cfg(5.0) };
    let l = label_solution(&problem("shell"), &sol("s1", "x"), &suite(&["t"]), &cfg, &r);
    assert_eq!(l.verdict, Verdict::Pass, "{l:?}");
    assert_eq!(std::fs::read_dir(root.path()).unwrap().count(), 0);
}

#[test]
fn python_runner_labels_add_examples() {
    if !python3() {
        eprintln!("python3 not available; skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("toy_runner.py");
    std::fs::write(&script, TOY_RUNNER).unwrap();
    let mut r = RunnerRegistry::new();
    r.register(
        "python",
        Arc::new(ProcessRunner::new("python3", vec![script.display().to_string()]).with_grace(Duration::from_millis(300))),
    );
    let p = problem("python");
    let s = suite(&["assert add(1, 2) == 3", "assert add(0, 0) == 0", "assert add(-1, 1) == 0"]);
    let solutions = [
        sol("ok", "def add(a, b):\n    return a + b"),
        sol("sub", "def add(a, b):\n    return a - b"),
        sol("loop", "def add(a, b):\n    while True:\n        pass"),
        sol("syntax", "def add(a, b) return"),
        sol("import", "import no_such_module_xyz\ndef add(a, b):\n    return a + b"),
        sol("second", "def add(a, b):\n    return 3 if a == 1 else 1"),
    ];
    let labels = label_corpus(&[p.clone()], &[s.clone()], &solutions, &cfg(1.0), &r).unwrap();
    let verdicts: Vec<_> = labels.iter().map(|l| (l.solution_id.as_str(), l.verdict)).collect();
    assert_eq!(
        verdicts,
        [
            ("ok", Verdict::Pass),
            ("sub", Verdict::Fail),
            ("loop", Verdict::Timeout),
            ("syntax", Verdict::Fail),
            ("import", Verdict::InfraError),
            ("second", Verdict::Fail),
        ]
    );
    assert!(labels[5].detail.as_deref().unwrap().starts_with("case 1 failed"));
}

#[test]
fn batch_verdicts_ignore_parallelism_and_order() {
    let mut r = RunnerRegistry::new();
    r.register("python", Arc::new(StubRunner::new()));
    let p = problem("python");
    let s = suite(&["assert add(1, 2) == 3"]);
    let solutions: Vec<_> = (0..100)
        .map(|i| match i % 3 {
            0 => sol(&format!("s{i:03}"), "def add(a, b):\n    return a + b"),
            1 => sol(&format!("s{i:03}"), "def add(a, b):\n    return a - b"),
            _ => sol(&format!("s{i:03}"), "def add(a, b):\n    while True:\n        pass"),
        })
        .collect();
    let serial = label_corpus(&[p.clone()], &[s.clone()], &solutions, &SandboxConfig { max_parallel: 1, ..cfg(1.0) }, &r).unwrap();
    let parallel = label_corpus(&[p.clone()], &[s.clone()], &solutions, &SandboxConfig { max_parallel: 8, ..cfg(1.0) }, &r).unwrap();
    assert_eq!(serial.len(), 100);
    assert_eq!(serial, parallel);
    let mut reversed: Vec<_> = solutions.iter().rev().cloned().collect();
    reversed.rotate_left(7);
    let shuffled = label_corpus(&[p], &[s], &reversed, &cfg(1.0), &r).unwrap();
    for l in &shuffled {
        assert_eq!(serial.iter().find(|x| x.solution_id == l.solution_id), Some(l));
    }
    assert_eq!(serial.iter().filter(|l| l.verdict == Verdict::Timeout).count(), 33);
}
