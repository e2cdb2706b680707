//! Deterministic offline backends that answer with OpenAI-shaped documents.
//!
//! Every output is a pure function of (request, model name, seed), so whole
//! pipeline runs are reproducible without network access.

use super::wire::{
    ChoiceLogprobs, CompletionChoice, CompletionRequest, CompletionResponse, EmbeddingDatum, EmbeddingPayload,
    EmbeddingRequest, EmbeddingResponse, WireRequest,
};
use super::{Granularity, Role, Transport, TransportError};
use crate::util::{normalize, rng_from_parts, unit_open_from_parts};
use rand::Rng;
use rand_distr::StandardNormal;
use std::collections::{BTreeMap, HashMap};

const STYLE_COMMENTS: &[&str] = &["# compute the result", "# direct formula", "# closed form", "# arithmetic"];

pub struct StubTransport {
    role: Role,
    model: String,
    seed: u64,
    dim: usize,
}

impl StubTransport {
    pub fn new(role: Role, model: &str, seed: u64, dim: usize) -> Self {
        Self {
            role,
            model: model.to_string(),
            seed,
            dim: dim.max(1),
        }
    }

    fn generate(&self, req: &CompletionRequest) -> CompletionResponse {
        let seed = req.seed.unwrap_or(self.seed).to_string();
        let signature = req
            .prompt
            .lines()
            .map(str::trim_end)
            .find(|l| l.starts_with("def "))
            .unwrap_or("def solution():")
            .to_string();
        let target = req.prompt.find("returns ").and_then(|at| {
            let rest = &req.prompt[at + "returns ".len()..];
            let end = rest.find('.')?;
            let expr = rest[..end].trim();
            (!expr.is_empty()).then(|| expr.to_string())
        });
        let skill = 0.2 + 0.6 * unit_open_from_parts(&["gen-skill", &self.model, &seed, &req.prompt]);
        let choices = (0..req.n)
            .map(|i| {
                let mut rng = rng_from_parts(&["gen", &self.model, &seed, &req.prompt, &i.to_string()]);
                let body = match &target {
                    Some(expr) if rng.random::<f64>() < skill => format!("return {expr}"),
                    Some(expr) => {
                        let delta = rng.random_range(1..=3);
                        let op = if rng.random::<bool>() { '+' } else { '-' };
                        format!("return {expr} {op} {delta}")
                    }
                    None => "pass".to_string(),
                };
                let mut code = signature.clone();
                if rng.random::<bool>() {
                    code.push_str("\n    ");
                    code.push_str(STYLE_COMMENTS[rng.random_range(0..STYLE_COMMENTS.len())]);
                }
                code.push_str("\n    ");
                code.push_str(&body);
                let u: f64 = rng.random_range(1e-6..1.0);
                CompletionChoice {
                    index: i,
                    text: code,
                    logprobs: Some(ChoiceLogprobs {
                        tokens: Vec::new(),
                        token_logprobs: vec![Some(u.ln())],
                        top_logprobs: Vec::new(),
                    }),
                }
            })
            .collect();
        CompletionResponse { choices }
    }

    fn predict(&self, req: &CompletionRequest) -> CompletionResponse {
        let u = unit_open_from_parts(&["pred", &self.model, &self.seed.to_string(), &req.prompt]);
        yes_no_response(u)
    }

    fn token_vector(&self, token: &str) -> Vec<f32> {
        let mut rng = rng_from_parts(&["tok", &self.model, &self.seed.to_string(), token]);
        let mut v: Vec<f32> = (0..self.dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
        if !normalize(&mut v) {
            v[0] = 1.0;
        }
        v
    }

    fn embed(&self, req: &EmbeddingRequest) -> EmbeddingResponse {
        let tokens = stub_tokens(&req.input);
        let vectors: Vec<Vec<f32>> = tokens.iter().map(|t| self.token_vector(t)).collect();
        let payload = match req.granularity {
            Granularity::PerToken => EmbeddingPayload::PerToken(vectors),
            Granularity::Pooled => EmbeddingPayload::Pooled(weighted_sum(&vectors, |_| 1.0)),
            // front-weighted summary standing in for a classifier-token state
            Granularity::Classifier => EmbeddingPayload::Pooled(weighted_sum(&vectors, |i| 1.0 / (i as f32 + 1.0))),
        };
        EmbeddingResponse {
            data: vec![EmbeddingDatum { embedding: payload }],
        }
    }
}

fn weighted_sum(vectors: &[Vec<f32>], weight: impl Fn(usize) -> f32) -> Vec<f32> {
    let dim = vectors.first().map_or(0, Vec::len);
    let mut out = vec![0.0f32; dim];
    for (i, v) in vectors.iter().enumerate() {
        let w = weight(i);
        for (o, x) in out.iter_mut().zip(v) {
            *o += w * x;
        }
    }
    out
}

/// Lower-cased identifier/number runs plus single punctuation characters.
pub fn stub_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() || c == '_' {
            word.extend(c.to_lowercase());
        } else {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            if !c.is_whitespace() {
                out.push(c.to_string());
            }
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    if out.is_empty() {
        out.push("<empty>".into());
    }
    out
}

fn yes_no_response(p_yes: f64) -> CompletionResponse {
    let mut top = BTreeMap::new();
    top.insert(" yes".to_string(), p_yes.ln());
    top.insert(" no".to_string(), (1.0 - p_yes).ln());
    let text = if p_yes >= 0.5 { " yes" } else { " no" };
    CompletionResponse {
        choices: vec![CompletionChoice {
            index: 0,
            text: text.to_string(),
            logprobs: Some(ChoiceLogprobs {
                tokens: vec![text.to_string()],
                token_logprobs: vec![Some(if p_yes >= 0.5 { p_yes.ln() } else { (1.0 - p_yes).ln() })],
                top_logprobs: vec![Some(top)],
            }),
        }],
    }
}

impl Transport for StubTransport {
    fn endpoint(&self) -> &str {
        "stub"
    }

    fn send(&self, request: &WireRequest, _subject: Option<&str>) -> Result<String, TransportError> {
        let body = match (request, self.role) {
            (WireRequest::Completion(c), Role::Generator) => serde_json::to_string(&self.generate(c)),
            (WireRequest::Completion(c), Role::Predictor) => serde_json::to_string(&self.predict(c)),
            (WireRequest::Embedding(e), Role::Encoder) => serde_json::to_string(&self.embed(e)),
            (_, role) => return Err(TransportError::fatal(format!("stub {role} backend cannot serve this request"))),
        };
        Ok(body.expect("stub responses serialize"))
    }
}

/// Predictor that knows the ground truth: p_yes = 0.99 for passing
/// solutions and 0.01 otherwise. Requests must name their subject.
pub struct OracleTransport {
    labels: HashMap<String, bool>,
}

/// Key identifying a (problem, solution) pair for oracle lookups.
pub fn subject_key(problem_id: &str, solution_id: &str) -> String {
    format!("{problem_id}\t{solution_id}")
}

impl OracleTransport {
    /// `labels` maps [`subject_key`] to correctness.
    pub fn new(labels: HashMap<String, bool>) -> Self {
        Self { labels }
    }
}

impl Transport for OracleTransport {
    fn endpoint(&self) -> &str {
        "oracle-stub"
    }

    fn cacheable(&self) -> bool {
        false
    }

    fn send(&self, request: &WireRequest, subject: Option<&str>) -> Result<String, TransportError> {
        if !matches!(request, WireRequest::Completion(_)) {
            return Err(TransportError::fatal("oracle-stub only serves completions".into()));
        }
        let subject = subject.ok_or_else(|| TransportError::fatal("oracle-stub needs a subject".into()))?;
        let correct = *self
            .labels
            .get(subject)
            .ok_or_else(|| TransportError::fatal(format!("oracle-stub has no label for {subject:?}")))?;
        let resp = yes_no_response(if correct { 0.99 } else { 0.01 });
        Ok(serde_json::to_string(&resp).expect("stub responses serialize"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_split_identifiers_and_symbols() {
        assert_eq!(stub_tokens("def add(a, b):"), vec!["def", "add", "(", "a", ",", "b", ")", ":"]);
        assert_eq!(stub_tokens("   "), vec!["<empty>"]);
    }
}
