//! OpenAI-compatible request and response documents.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::Granularity;

/// One backend request. Its canonical JSON is the cache key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WireRequest {
    Completion(CompletionRequest),
    Embedding(EmbeddingRequest),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub prompt: String,
    pub n: usize,
    pub temperature: f64,
    pub max_tokens: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRequest {
    pub model: String,
    pub input: String,
    pub granularity: Granularity,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub choices: Vec<CompletionChoice>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CompletionChoice {
    #[serde(default)]
    pub index: usize,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub logprobs: Option<ChoiceLogprobs>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChoiceLogprobs {
    #[serde(default)]
    pub tokens: Vec<String>,
    #[serde(default)]
    pub token_logprobs: Vec<Option<f64>>,
    #[serde(default)]
    pub top_logprobs: Vec<Option<BTreeMap<String, f64>>>,
}

impl CompletionChoice {
    /// Sum of generated-token log-probabilities, when reported.
    pub fn sequence_logprob(&self) -> Option<f64> {
        let lp = self.logprobs.as_ref()?;
        if lp.token_logprobs.is_empty() {
            return None;
        }
        Some(lp.token_logprobs.iter().flatten().sum())
    }

    /// Top-k candidates at the first generated position.
    pub fn first_position_candidates(&self) -> Vec<(&str, f64)> {
        let Some(lp) = self.logprobs.as_ref() else {
            return Vec::new();
        };
        let mut out: Vec<(&str, f64)> = lp
            .top_logprobs
            .first()
            .and_then(Option::as_ref)
            .map(|m| m.iter().map(|(t, v)| (t.as_str(), *v)).collect())
            .unwrap_or_default();
        // the sampled token always counts, even when top-k omits it
        if let (Some(tok), Some(Some(v))) = (lp.tokens.first(), lp.token_logprobs.first()) {
            if !out.iter().any(|(t, _)| t == tok) {
                out.push((tok.as_str(), *v));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EmbeddingPayload {
    Pooled(Vec<f32>),
    PerToken(Vec<Vec<f32>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingDatum {
    pub embedding: EmbeddingPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingResponse {
    pub data: Vec<EmbeddingDatum>,
}
