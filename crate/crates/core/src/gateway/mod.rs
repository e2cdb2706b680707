//! Access to the generator, predictor and encoder roles.
//!
//! A [`Gateway`] wraps one [`Transport`] (OpenAI-compatible HTTP, or a
//! deterministic stub) with role checks, retries, a concurrency limit and a
//! content-addressed response cache. Cached and fresh responses go through
//! the same parser, so they are bit-identical.

mod cache;
mod http;
mod posterior;
mod stub;
pub mod wire;

pub use cache::ResponseCache;
pub use http::HttpTransport;
pub use posterior::{p_yes, posterior_from_top_logprobs, YesNoPosterior, ABSENT_CLASS_LOGPROB};
pub use stub::{stub_tokens, subject_key, OracleTransport, StubTransport};

use crate::corpus::{CandidateSolution, ProblemSpec};
use crate::util::{normalize, sha256_hex};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;
use wire::{CompletionRequest, CompletionResponse, EmbeddingPayload, EmbeddingRequest, EmbeddingResponse, WireRequest};

/// Instruction placed before the problem when asking for solutions.
pub const GENERATION_INSTRUCTION: &str =
    "Complete the following programming task. Respond with the complete function implementation only.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Generator,
    Predictor,
    Encoder,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Generator => "generator",
            Self::Predictor => "predictor",
            Self::Encoder => "encoder",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// Mean of token vectors, L2-normalized.
    Pooled,
    /// One unit vector per token.
    PerToken,
    /// Classifier-token representation.
    Classifier,
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pooled => "pooled",
            Self::PerToken => "per_token",
            Self::Classifier => "classifier",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("backend role mismatch: expected {expected}, configured as {actual}")]
    WrongRole { expected: Role, actual: Role },
    #[error("{0} must not be empty")]
    EmptyInput(&'static str),
    #[error("prompt of {len} characters exceeds the predictor limit of {limit}")]
    PromptTooLong { len: usize, limit: usize },
    #[error("backend {endpoint} failed after {attempts} attempt(s): {message}")]
    Remote {
        endpoint: String,
        attempts: u32,
        message: String,
    },
    #[error("malformed response from {endpoint}: {message}")]
    Malformed { endpoint: String, message: String },
    #[error("neither a yes nor a no token among the first-position candidates")]
    NoYesNoClass,
    #[error("invalid backend config: {0}")]
    Config(String),
    #[error("cache i/o: {0}")]
    Cache(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct TransportError {
    pub retryable: bool,
    pub message: String,
}

impl TransportError {
    pub fn retryable(message: String) -> Self {
        Self { retryable: true, message }
    }

    pub fn fatal(message: String) -> Self {
        Self { retryable: false, message }
    }
}

/// Something that turns a request document into a raw response body.
pub trait Transport: Send + Sync {
    fn endpoint(&self) -> &str;

    /// `subject` names the (problem, solution) pair under assessment; only
    /// ground-truth stubs look at it.
    fn send(&self, request: &WireRequest, subject: Option<&str>) -> Result<String, TransportError>;

    fn cacheable(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub role: Role,
    /// `stub`, `oracle-stub` (predictor only) or an HTTP base URL such as
    /// `http://localhost:8000/v1`.
    pub endpoint: String,
    pub model_name: String,
    #[serde(default = "default_parallel")]
    pub max_parallel: usize,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    /// Environment variable holding a bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub seed: u64,
    /// Vector dimension of the stub encoder.
    #[serde(default = "default_stub_dim")]
    pub stub_dim: usize,
    /// Number of first-position candidates requested from the predictor.
    #[serde(default = "default_top_logprobs")]
    pub top_logprobs: usize,
    /// Predictor context limit, in characters.
    #[serde(default)]
    pub max_prompt_chars: Option<usize>,
    #[serde(default = "default_request_timeout")]
    pub request_timeout_s: f64,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_parallel() -> usize {
    4
}
fn default_stub_dim() -> usize {
    64
}
fn default_top_logprobs() -> usize {
    5
}
fn default_request_timeout() -> f64 {
    120.0
}

impl BackendConfig {
    pub fn stub(role: Role, model_name: &str) -> Self {
        Self {
            role,
            endpoint: "stub".into(),
            model_name: model_name.into(),
            max_parallel: default_parallel(),
            cache_dir: None,
            api_key_env: None,
            seed: 0,
            stub_dim: default_stub_dim(),
            top_logprobs: default_top_logprobs(),
            max_prompt_chars: None,
            request_timeout_s: default_request_timeout(),
            retry: RetryPolicy::default(),
        }
    }

    pub fn is_stub(&self) -> bool {
        self.endpoint == "stub" || self.endpoint == "oracle-stub"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub n: usize,
    pub temperature: f64,
    pub max_tokens: usize,
    pub seed: Option<u64>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            n: 10,
            temperature: 0.8,
            max_tokens: 512,
            seed: None,
        }
    }
}

/// One embedded text. Pooled and classifier embeddings hold a single vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub granularity: Granularity,
    pub source_hash: String,
    pub vectors: Vec<Vec<f32>>,
}

impl Embedding {
    /// The single vector of a pooled or classifier embedding.
    pub fn vector(&self) -> &[f32] {
        &self.vectors[0]
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }
}

struct Semaphore {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            permits: Mutex::new(n.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut left = self.permits.lock().expect("semaphore");
        while *left == 0 {
            left = self.freed.wait(left).expect("semaphore");
        }
        *left -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("semaphore") += 1;
        self.0.freed.notify_one();
    }
}

pub struct Gateway {
    cfg: BackendConfig,
    transport: Arc<dyn Transport>,
    cache: ResponseCache,
    limiter: Semaphore,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("role", &self.cfg.role)
            .field("endpoint", &self.transport.endpoint())
            .field("model", &self.cfg.model_name)
            .finish()
    }
}

impl Gateway {
    /// Builds the transport named by `cfg.endpoint`. `oracle-stub` needs
    /// ground-truth labels and must go through [`Gateway::with_transport`].
    pub fn from_config(cfg: BackendConfig) -> Result<Self, GatewayError> {
        let transport: Arc<dyn Transport> = match cfg.endpoint.as_str() {
            "stub" => Arc::new(StubTransport::new(cfg.role, &cfg.model_name, cfg.seed, cfg.stub_dim)),
            "oracle-stub" => {
                return Err(GatewayError::Config(
                    "oracle-stub requires ground-truth labels; build it with Gateway::with_transport".into(),
                ))
            }
            url if url.starts_with("http://") || url.starts_with("https://") => {
                let api_key = cfg.api_key_env.as_ref().and_then(|v| std::env::var(v).ok());
                let timeout = Duration::from_secs_f64(cfg.request_timeout_s.max(0.001));
                Arc::new(HttpTransport::new(url, api_key, timeout).map_err(|e| GatewayError::Config(e.message))?)
            }
            other => return Err(GatewayError::Config(format!("unsupported endpoint `{other}`"))),
        };
        Self::with_transport(cfg, transport)
    }

    pub fn with_transport(cfg: BackendConfig, transport: Arc<dyn Transport>) -> Result<Self, GatewayError> {
        if cfg.max_parallel == 0 {
            return Err(GatewayError::Config("max_parallel must be >= 1".into()));
        }
        let cache = ResponseCache::new(cfg.cache_dir.clone())?;
        let limiter = Semaphore::new(cfg.max_parallel);
        Ok(Self {
            cfg,
            transport,
            cache,
            limiter,
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    pub fn model_name(&self) -> &str {
        &self.cfg.model_name
    }

    fn require(&self, role: Role) -> Result<(), GatewayError> {
        if self.cfg.role != role {
            return Err(GatewayError::WrongRole {
                expected: role,
                actual: self.cfg.role,
            });
        }
        Ok(())
    }

    fn malformed(&self, message: impl Into<String>) -> GatewayError {
        GatewayError::Malformed {
            endpoint: self.transport.endpoint().to_string(),
            message: message.into(),
        }
    }

    /// Sends `request` with cache lookup and bounded retries, returning the raw body.
    fn exchange(&self, request: &WireRequest, subject: Option<&str>) -> Result<String, GatewayError> {
        let cacheable = self.transport.cacheable();
        let key = sha256_hex(serde_json::to_vec(request).expect("request serializes"));
        if cacheable {
            if let Some(raw) = self.cache.get(&key) {
                return Ok(raw);
            }
        }
        let attempts = self.cfg.retry.attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.cfg.retry.base_delay_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
            let result = {
                let _permit = self.limiter.acquire();
                self.transport.send(request, subject)
            };
            match result {
                Ok(raw) => {
                    if cacheable {
                        self.cache.put(&key, &raw)?;
                    }
                    return Ok(raw);
                }
                Err(e) => {
                    log::debug!("{} attempt {} failed: {}", self.transport.endpoint(), attempt + 1, e.message);
                    last = e.message;
                    if !e.retryable {
                        return Err(GatewayError::Remote {
                            endpoint: self.transport.endpoint().to_string(),
                            attempts: attempt + 1,
                            message: last,
                        });
                    }
                }
            }
        }
        Err(GatewayError::Remote {
            endpoint: self.transport.endpoint().to_string(),
            attempts,
            message: last,
        })
    }

    /// Samples `gen.n` solutions for `problem`, ranked by sequence
    /// log-probability when the backend reports it, else by choice index.
    pub fn generate_solutions(
        &self,
        problem: &ProblemSpec,
        gen: &GenerationConfig,
    ) -> Result<Vec<CandidateSolution>, GatewayError> {
        self.require(Role::Generator)?;
        if gen.n == 0 {
            return Err(GatewayError::Config("generation n must be >= 1".into()));
        }
        let request = WireRequest::Completion(CompletionRequest {
            model: self.cfg.model_name.clone(),
            prompt: format!("{GENERATION_INSTRUCTION}\n\n{}\n", problem.text()),
            n: gen.n,
            temperature: gen.temperature,
            max_tokens: gen.max_tokens,
            logprobs: Some(1),
            seed: gen.seed,
        });
        let raw = self.exchange(&request, None)?;
        let resp: CompletionResponse = serde_json::from_str(&raw).map_err(|e| self.malformed(e.to_string()))?;
        if resp.choices.len() != gen.n {
            return Err(self.malformed(format!("expected {} choices, got {}", gen.n, resp.choices.len())));
        }
        let mut ranked: Vec<_> = resp.choices.iter().collect();
        ranked.sort_by(|a, b| {
            let (la, lb) = (a.sequence_logprob(), b.sequence_logprob());
            match (la, lb) {
                (Some(x), Some(y)) => y.total_cmp(&x),
                _ => std::cmp::Ordering::Equal,
            }
            .then(a.index.cmp(&b.index))
        });
        Ok(ranked
            .into_iter()
            .enumerate()
            .map(|(i, choice)| CandidateSolution {
                problem_id: problem.id.clone(),
                solution_id: format!("s{:02}", i + 1),
                code: extract_code(&choice.text),
                rank_hint: Some(i as u32 + 1),
                generator_tag: self.cfg.model_name.clone(),
            })
            .collect())
    }

    pub fn embed(&self, text: &str, granularity: Granularity) -> Result<Embedding, GatewayError> {
        self.require(Role::Encoder)?;
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyInput("text to embed"));
        }
        let request = WireRequest::Embedding(EmbeddingRequest {
            model: self.cfg.model_name.clone(),
            input: text.to_string(),
            granularity,
        });
        let raw = self.exchange(&request, None)?;
        let resp: EmbeddingResponse = serde_json::from_str(&raw).map_err(|e| self.malformed(e.to_string()))?;
        let datum = resp
            .data
            .into_iter()
            .next()
            .ok_or_else(|| self.malformed("embedding response has no data"))?;
        let mut vectors = match (granularity, datum.embedding) {
            (Granularity::PerToken, EmbeddingPayload::PerToken(v)) => v,
            (Granularity::PerToken, EmbeddingPayload::Pooled(_)) => {
                return Err(self.malformed("expected per-token vectors, got a single vector"))
            }
            (_, EmbeddingPayload::Pooled(v)) => vec![v],
            // a token matrix for a pooled request is mean-pooled here
            (_, EmbeddingPayload::PerToken(tokens)) => vec![mean(&tokens)],
        };
        if vectors.is_empty() || vectors[0].is_empty() {
            return Err(self.malformed("empty embedding"));
        }
        let dim = vectors[0].len();
        for v in &mut vectors {
            if v.len() != dim {
                return Err(self.malformed("ragged embedding vectors"));
            }
            if !normalize(v) {
                return Err(self.malformed("zero or non-finite embedding vector"));
            }
        }
        Ok(Embedding {
            granularity,
            source_hash: sha256_hex(text),
            vectors,
        })
    }

    /// Reads the yes/no posterior at the first generated position of `prompt`.
    pub fn yes_no_posterior(&self, prompt: &str, subject: Option<&str>) -> Result<YesNoPosterior, GatewayError> {
        self.require(Role::Predictor)?;
        if prompt.trim().is_empty() {
            return Err(GatewayError::EmptyInput("prompt"));
        }
        if let Some(limit) = self.cfg.max_prompt_chars {
            let len = prompt.chars().count();
            if len > limit {
                return Err(GatewayError::PromptTooLong { len, limit });
            }
        }
        let request = WireRequest::Completion(CompletionRequest {
            model: self.cfg.model_name.clone(),
            prompt: prompt.to_string(),
            n: 1,
            temperature: 0.0,
            max_tokens: 1,
            logprobs: Some(self.cfg.top_logprobs),
            seed: None,
        });
        let raw = self.exchange(&request, subject)?;
        let resp: CompletionResponse = serde_json::from_str(&raw).map_err(|e| self.malformed(e.to_string()))?;
        let choice = resp.choices.first().ok_or_else(|| self.malformed("no choices"))?;
        posterior_from_top_logprobs(choice.first_position_candidates()).ok_or(GatewayError::NoYesNoClass)
    }
}

fn mean(vectors: &[Vec<f32>]) -> Vec<f32> {
    let dim = vectors.first().map_or(0, Vec::len);
    let mut out = vec![0.0f32; dim];
    for v in vectors {
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    let n = vectors.len().max(1) as f32;
    out.iter_mut().for_each(|x| *x /= n);
    out
}

/// Strips a surrounding markdown code fence, if any.
pub fn extract_code(text: &str) -> String {
    let trimmed = text.trim_matches('\n');
    if let Some(start) = trimmed.find("```") {
        let after = &trimmed[start + 3..];
        let body = after.split_once('\n').map_or("", |(_, rest)| rest);
        let body = body.find("```").map_or(body, |end| &body[..end]);
        return body.trim_end().to_string();
    }
    trimmed.trim_end().to_string()
}
