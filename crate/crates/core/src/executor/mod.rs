//! Ground-truth correctness labels from test execution.
//!
//! A runner is a one-shot subprocess that reads one JSON [`RunRequest`] on
//! stdin and writes one JSON [`RunResponse`] on stdout. Runners are looked up
//! per language tag in a [`RunnerRegistry`]; [`StubRunner`] is an in-process
//! stand-in for offline pipelines.

mod process;
mod stub;

pub use process::ProcessRunner;
pub use stub::StubRunner;

use crate::corpus::{CandidateSolution, ProblemSpec, TestSuite};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error("no usable labels: every label is infra_error or the list is empty")]
    NoUsableLabels,
    #[error("invalid sandbox config: {0}")]
    InvalidConfig(String),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error("cannot start runner: {0}")]
    Spawn(#[source] std::io::Error),
    #[error("runner protocol violation: {0}")]
    Protocol(String),
    #[error("runner exceeded the wall-clock budget and was killed")]
    Killed,
    #[error("sandbox setup failed: {0}")]
    Sandbox(#[source] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Timeout,
    InfraError,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pass => "pass",
            Self::Fail => "fail",
            Self::Timeout => "timeout",
            Self::InfraError => "infra_error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectnessLabel {
    pub problem_id: String,
    pub solution_id: String,
    pub verdict: Verdict,
    pub detail: Option<String>,
    /// Wall-clock seconds; in-process stub runs report 0.
    pub duration: f64,
}

impl CorrectnessLabel {
    /// `Some(true)` for pass, `Some(false)` for fail or timeout, `None` for infra errors.
    pub fn correctness(&self) -> Option<bool> {
        match self.verdict {
            Verdict::Pass => Some(true),
            Verdict::Fail | Verdict::Timeout => Some(false),
            Verdict::InfraError => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SandboxConfig {
    pub timeout_s: f64,
    pub max_output_bytes: usize,
    /// Whether runners may use the network. Only advertised to the runner
    /// through its environment; enforcement is the runner's job.
    pub network: bool,
    pub max_parallel: usize,
    /// Parent directory for per-run temp dirs; the system temp dir when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workdir_root: Option<PathBuf>,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        Self {
            timeout_s: 10.0,
            max_output_bytes: 64 * 1024,
            network: false,
            max_parallel: 4,
            workdir_root: None,
        }
    }
}

impl SandboxConfig {
    pub fn validate(&self) -> Result<(), ExecError> {
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(ExecError::InvalidConfig(format!("timeout_s must be > 0, got {}", self.timeout_s)));
        }
        if self.max_parallel == 0 {
            return Err(ExecError::InvalidConfig("max_parallel must be >= 1".into()));
        }
        Ok(())
    }
}

/// Request document sent to a runner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRequest {
    pub setup: String,
    pub code: String,
    pub tests: Vec<String>,
    pub timeout_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunnerVerdict {
    Pass,
    Fail,
    Timeout,
    Error,
}

/// Response document returned by a runner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResponse {
    pub verdict: RunnerVerdict,
    pub failed_case_index: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub response: RunResponse,
    pub elapsed_s: f64,
}

pub trait Runner: Send + Sync {
    /// Executes one request inside `workdir`, which the caller creates and removes.
    fn run(&self, request: &RunRequest, cfg: &SandboxConfig, workdir: &Path) -> Result<RunOutcome, RunnerError>;
}

/// Runners keyed by language tag.
#[derive(Clone, Default)]
pub struct RunnerRegistry {
    runners: HashMap<String, Arc<dyn Runner>>,
}

impl RunnerRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, language: impl Into<String>, runner: Arc<dyn Runner>) {
        self.runners.insert(language.into(), runner);
    }

    pub fn get(&self, language: &str) -> Option<&Arc<dyn Runner>> {
        self.runners.get(language)
    }
}

fn combined_setup(problem: &ProblemSpec, suite: &TestSuite) -> String {
    match (&problem.setup_code, &suite.setup_code) {
        (Some(a), Some(b)) if a == b => a.clone(),
        (Some(a), Some(b)) => format!("{a}\n{b}"),
        (Some(a), None) | (None, Some(a)) => a.clone(),
        (None, None) => String::new(),
    }
}

fn is_environment_import_failure(message: &str) -> bool {
    message.starts_with("ModuleNotFoundError") || message.starts_with("ImportError")
}

fn label(problem: &ProblemSpec, solution: &CandidateSolution, verdict: Verdict, detail: Option<String>, duration: f64) -> CorrectnessLabel {
    CorrectnessLabel {
        problem_id: problem.id.clone(),
        solution_id: solution.solution_id.clone(),
        verdict,
        detail,
        duration,
    }
}

/// Runs one solution against its suite in a fresh temp directory.
pub fn label_solution(
    problem: &ProblemSpec,
    solution: &CandidateSolution,
    suite: &TestSuite,
    cfg: &SandboxConfig,
    registry: &RunnerRegistry,
) -> CorrectnessLabel {
    let Some(runner) = registry.get(&problem.language) else {
        return label(
            problem,
            solution,
            Verdict::InfraError,
            Some(format!("no runner registered for language `{}`", problem.language)),
            0.0,
        );
    };
    let request = RunRequest {
        setup: combined_setup(problem, suite),
        code: solution.code.clone(),
        tests: suite.cases.clone(),
        timeout_s: cfg.timeout_s,
    };
    let workdir = match &cfg.workdir_root {
        Some(root) => tempfile::Builder::new().prefix("codeqe-sbx-").tempdir_in(root),
        None => tempfile::Builder::new().prefix("codeqe-sbx-").tempdir(),
    };
    let workdir = match workdir {
        Ok(dir) => dir,
        Err(e) => {
            return label(problem, solution, Verdict::InfraError, Some(RunnerError::Sandbox(e).to_string()), 0.0)
        }
    };
    let outcome = runner.run(&request, cfg, workdir.path());
    if let Err(e) = workdir.close() {
        log::warn!("could not remove sandbox dir: {e}");
    }
    match outcome {
        Ok(RunOutcome { response, elapsed_s }) => {
            let (verdict, detail) = match response.verdict {
                RunnerVerdict::Pass => (Verdict::Pass, None),
                RunnerVerdict::Fail => (
                    Verdict::Fail,
                    Some(match response.failed_case_index {
                        Some(i) => format!("case {i} failed: {}", response.message),
                        None => response.message,
                    }),
                ),
                RunnerVerdict::Timeout => (Verdict::Timeout, Some(response.message)),
                RunnerVerdict::Error if is_environment_import_failure(&response.message) => {
                    (Verdict::InfraError, Some(response.message))
                }
                // code that does not load is an incorrect solution
                RunnerVerdict::Error => (Verdict::Fail, Some(response.message)),
            };
            let detail = detail.filter(|d| !d.is_empty());
            label(problem, solution, verdict, detail, elapsed_s)
        }
        Err(RunnerError::Killed) => label(
            problem,
            solution,
            Verdict::Timeout,
            Some(RunnerError::Killed.to_string()),
            cfg.timeout_s,
        ),
        Err(e) => label(problem, solution, Verdict::InfraError, Some(e.to_string()), 0.0),
    }
}

/// Labels every solution, running up to `cfg.max_parallel` sandboxes at once.
/// The output is in input order regardless of completion order.
pub fn label_corpus(
    problems: &[ProblemSpec],
    suites: &[TestSuite],
    solutions: &[CandidateSolution],
    cfg: &SandboxConfig,
    registry: &RunnerRegistry,
) -> Result<Vec<CorrectnessLabel>, ExecError> {
    use rayon::prelude::*;

    cfg.validate()?;
    let problem_by_id: HashMap<&str, &ProblemSpec> = problems.iter().map(|p| (p.id.as_str(), p)).collect();
    let suite_by_id: HashMap<&str, &TestSuite> = suites.iter().map(|s| (s.problem_id.as_str(), s)).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.max_parallel)
        .build()
        .map_err(|e| ExecError::Pool(e.to_string()))?;
    Ok(pool.install(|| {
        solutions
            .par_iter()
            .map(|sol| {
                let problem = problem_by_id.get(sol.problem_id.as_str());
                let suite = suite_by_id.get(sol.problem_id.as_str());
                match (problem, suite) {
                    (Some(p), Some(s)) => label_solution(p, sol, s, cfg, registry),
                    _ => CorrectnessLabel {
                        problem_id: sol.problem_id.clone(),
                        solution_id: sol.solution_id.clone(),
                        verdict: Verdict::InfraError,
                        detail: Some("problem or test suite not found".into()),
                        duration: 0.0,
                    },
                }
            })
            .collect()
    }))
}

/// Micro pass rate over labels, excluding infra errors.
pub fn pass_rate(labels: &[CorrectnessLabel]) -> Result<f64, ExecError> {
    let (pass, usable) = labels.iter().fold((0usize, 0usize), |(p, u), l| match l.correctness() {
        Some(true) => (p + 1, u + 1),
        Some(false) => (p, u + 1),
        None => (p, u),
    });
    if usable == 0 {
        return Err(ExecError::NoUsableLabels);
    }
    Ok(pass as f64 / usable as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lab(v: Verdict) -> CorrectnessLabel {
        CorrectnessLabel {
            problem_id: "p".into(),
            solution_id: "s".into(),
            verdict: v,
            detail: None,
            duration: 0.0,
        }
    }

    #[test]
    fn pass_rate_half() {
        let mut v: Vec<_> = (0..5).map(|_| lab(Verdict::Pass)).collect();
        v.extend((0..5).map(|_| lab(Verdict::Fail)));
        assert_eq!(pass_rate(&v).unwrap(), 0.5);
    }

    #[test]
    fn pass_rate_all_pass_and_infra_excluded() {
        let v = vec![lab(Verdict::Pass), lab(Verdict::Pass), lab(Verdict::InfraError)];
        assert_eq!(pass_rate(&v).unwrap(), 1.0);
        let t = vec![lab(Verdict::Pass), lab(Verdict::Timeout)];
        assert_eq!(pass_rate(&t).unwrap(), 0.5);
    }

    #[test]
    fn pass_rate_rejects_all_infra() {
        assert!(matches!(pass_rate(&[lab(Verdict::InfraError)]), Err(ExecError::NoUsableLabels)));
        assert!(pass_rate(&[]).is_err());
    }

    #[test]
    fn missing_runner_is_infra_error() {
        let p = ProblemSpec {
            id: "1".into(),
            description: "d".into(),
            entry_point: None,
            language: "cobol".into(),
            setup_code: None,
        };
        let s = CandidateSolution {
            problem_id: "1".into(),
            solution_id: "a".into(),
            code: "x".into(),
            rank_hint: None,
            generator_tag: "t".into(),
        };
        let t = TestSuite { problem_id: "1".into(), cases: vec!["assert x".into()], setup_code: None };
        let l = label_solution(&p, &s, &t, &SandboxConfig::default(), &RunnerRegistry::new());
        assert_eq!(l.verdict, Verdict::InfraError);
        assert_eq!(l.correctness(), None);
        assert!(l.detail.unwrap().contains("cobol"));
    }

    #[test]
    fn config_validation() {
        let mut c = SandboxConfig::default();
        assert!(c.validate().is_ok());
        c.timeout_s = 0.0;
        assert!(c.validate().is_err());
        c.timeout_s = 1.0;
        c.max_parallel = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn wire_documents_match_protocol_shape() {
        let req = RunRequest { setup: String::new(), code: "c".into(), tests: vec!["t".into()], timeout_s: 2.0 };
        let v: serde_json::Value = serde_json::to_value(&req).unwrap();
        assert_eq!(v, serde_json::json!({"setup": "", "code": "c", "tests": ["t"], "timeout_s": 2.0}));
        let resp: RunResponse =
            serde_json::from_str(r#"{"verdict":"fail","failed_case_index":1,"message":"boom"}"#).unwrap();
        assert_eq!(resp.verdict, RunnerVerdict::Fail);
        assert_eq!(resp.failed_case_index, Some(1));
    }
}
