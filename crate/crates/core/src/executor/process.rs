use super::{RunOutcome, RunRequest, RunResponse, Runner, RunnerError, SandboxConfig};
use std::io::{Read, Write};
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

const POLL: Duration = Duration::from_millis(10);
const STDERR_TAIL: usize = 2048;

/// Spawns `program args...` per request and speaks the JSON wire protocol over
/// stdin/stdout. The child is killed once `timeout_s + grace` elapses.
#[derive(Debug, Clone)]
pub struct ProcessRunner {
    program: String,
    args: Vec<String>,
    grace: Duration,
}

impl ProcessRunner {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        Self {
            program: program.into(),
            args,
            grace: Duration::from_secs(1),
        }
    }

    /// Builds a runner from a command vector (`["python3", "shim.py"]`).
    pub fn from_command(command: &[String]) -> Option<Self> {
        let (program, args) = command.split_first()?;
        Some(Self::new(program.clone(), args.to_vec()))
    }

    pub fn with_grace(mut self, grace: Duration) -> Self {
        self.grace = grace;
        self
    }
}

fn read_limited(mut reader: impl Read, limit: usize) -> (Vec<u8>, bool) {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 8192];
    let mut overflow = false;
    loop {
        match reader.read(&mut chunk) {
            Ok(0) | Err(_) => break,
            Ok(n) => {
                if buf.len() + n > limit {
                    buf.extend_from_slice(&chunk[..limit - buf.len()]);
                    overflow = true;
                    // keep draining so the child never blocks on a full pipe
                } else if !overflow {
                    buf.extend_from_slice(&chunk[..n]);
                }
            }
        }
    }
    (buf, overflow)
}

impl Runner for ProcessRunner {
    fn run(&self, request: &RunRequest, cfg: &SandboxConfig, workdir: &Path) -> Result<RunOutcome, RunnerError> {
        let mut cmd = Command::new(&self.program);
        cmd.args(&self.args)
            .current_dir(workdir)
            .env_clear()
            .env("HOME", workdir)
            .env("TMPDIR", workdir)
            .env("CODEQE_NETWORK", if cfg.network { "1" } else { "0" })
            .env("CODEQE_MAX_OUTPUT_BYTES", cfg.max_output_bytes.to_string())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        for var in ["PATH", "LANG", "LC_ALL", "PYTHONPATH", "JAVA_HOME"] {
            if let Ok(v) = std::env::var(var) {
                cmd.env(var, v);
            }
        }
        let payload = serde_json::to_vec(request).map_err(|e| RunnerError::Protocol(e.to_string()))?;

        let start = Instant::now();
        let mut child = cmd.spawn().map_err(RunnerError::Spawn)?;
        let mut stdin = child.stdin.take().expect("stdin piped");
        let writer = thread::spawn(move || {
            let _ = stdin.write_all(&payload);
        });
        let stdout = child.stdout.take().expect("stdout piped");
        let stderr = child.stderr.take().expect("stderr piped");
        let limit = cfg.max_output_bytes;
        let out_reader = thread::spawn(move || read_limited(stdout, limit));
        let err_reader = thread::spawn(move || read_limited(stderr, STDERR_TAIL));

        let budget = Duration::from_secs_f64(cfg.timeout_s) + self.grace;
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break Some(status),
                Ok(None) if start.elapsed() >= budget => {
                    let _ = child.kill();
                    let _ = child.wait();
                    break None;
                }
                Ok(None) => thread::sleep(POLL),
                Err(e) => return Err(RunnerError::Spawn(e)),
            }
        };
        let elapsed_s = start.elapsed().as_secs_f64();
        let _ = writer.join();
        let Some(status) = status else {
            return Err(RunnerError::Killed);
        };
        let (stdout, overflow) = out_reader.join().unwrap_or_default();
        let (stderr, _) = err_reader.join().unwrap_or_default();

        if overflow {
            return Err(RunnerError::Protocol(format!(
                "response exceeds max_output_bytes ({limit})"
            )));
        }
        if !status.success() {
            return Err(RunnerError::Protocol(format!(
                "runner exited with {status}: {}",
                String::from_utf8_lossy(&stderr).trim()
            )));
        }
        let response: RunResponse = serde_json::from_slice(&stdout).map_err(|e| {
            RunnerError::Protocol(format!(
                "malformed response ({e}): {:?}",
                String::from_utf8_lossy(&stdout).chars().take(200).collect::<String>()
            ))
        })?;
        Ok(RunOutcome { response, elapsed_s })
    }
}
