//! Per-pair quality estimators: zero-shot and few-shot posterior scoring,
//! plus the two sibling-similarity baselines.

mod baselines;
mod prompt;

use crate::corpus::{CandidateSolution, ProblemSpec};
use crate::gateway::{subject_key, Gateway, GatewayError, Granularity};
use crate::retrieval::{retrieve_balanced, BalancedContext, ExampleIndex, NeighborhoodConfig, QueryVectors, RetrievalError};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub use baselines::{greedy_f1, mean_cosine, MatchScore};
pub use prompt::{build_prompt, fit_prompt, label_word, PromptError, PromptTemplate, DEFAULT_INSTRUCTION};

#[derive(Debug, thiserror::Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("no sibling solutions for {0}")]
    NoSiblings(String),
    #[error("alpha {0} does not name a few-shot variant (expected 1, 0.5 or 0)")]
    UnknownVariant(f64),
    #[error("encoder mismatch: index built with `{index}`, scoring with `{encoder}`")]
    EncoderMismatch { index: String, encoder: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ZS")]
    Zs,
    #[serde(rename = "FS-P")]
    FsP,
    #[serde(rename = "FS-S")]
    FsS,
    #[serde(rename = "FS-PS")]
    FsPs,
    #[serde(rename = "ELS")]
    Els,
    #[serde(rename = "TLS")]
    Tls,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Zs, Method::FsP, Method::FsS, Method::FsPs, Method::Els, Method::Tls];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Zs => "ZS",
            Self::FsP => "FS-P",
            Self::FsS => "FS-S",
            Self::FsPs => "FS-PS",
            Self::Els => "ELS",
            Self::Tls => "TLS",
        }
    }

    /// Weight on problem similarity for the few-shot variants.
    pub fn alpha(self) -> Option<f64> {
        match self {
            Self::FsP => Some(1.0),
            Self::FsPs => Some(0.5),
            Self::FsS => Some(0.0),
            _ => None,
        }
    }

    pub fn for_alpha(alpha: f64) -> Option<Self> {
        [Self::FsP, Self::FsPs, Self::FsS].into_iter().find(|m| m.alpha() == Some(alpha))
    }

    pub fn is_few_shot(self) -> bool {
        self.alpha().is_some()
    }

    pub fn uses_predictor(self) -> bool {
        self == Self::Zs || self.is_few_shot()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown method `{s}` (expected one of ZS, FS-P, FS-S, FS-PS, ELS, TLS)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub problem_id: String,
    pub solution_id: String,
    pub method: Method,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_used: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_used: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_example_ids: Option<Vec<String>>,
}

/// A score together with the prompt that produced it, for auditing.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub score: QualityScore,
    pub prompt: Option<String>,
}

fn query_text(problem: &ProblemSpec) -> String {
    problem.text().to_string()
}

pub fn score_zs(
    problem: &ProblemSpec,
    solution: &CandidateSolution,
    template: &PromptTemplate,
    predictor: &Gateway,
) -> Result<Scored, EstimatorError> {
    let text = query_text(problem);
    let (prompt, _) = fit_prompt(template, &BalancedContext::empty(), (&text, &solution.code), predictor.config().max_prompt_chars)?;
    let post = predictor.yes_no_posterior(&prompt, Some(&subject_key(&solution.problem_id, &solution.solution_id)))?;
    Ok(Scored {
        score: QualityScore {
            problem_id: solution.problem_id.clone(),
            solution_id: solution.solution_id.clone(),
            method: Method::Zs,
            score: post.p_yes,
            k_used: None,
            alpha_used: None,
            context_example_ids: None,
        },
        prompt: Some(prompt),
    })
}

/// Few-shot scoring: the query pair's balanced neighbourhood is rendered as
/// labeled examples ahead of the query. `k_used` is the configured k; the
/// ids list shows what actually made it into the prompt.
pub fn score_fs(
    problem: &ProblemSpec,
    solution: &CandidateSolution,
    index: &ExampleIndex,
    cfg: &NeighborhoodConfig,
    template: &PromptTemplate,
    encoder: &Gateway,
    predictor: &Gateway,
) -> Result<Scored, EstimatorError> {
    let method = Method::for_alpha(cfg.alpha).ok_or(EstimatorError::UnknownVariant(cfg.alpha))?;
    if index.encoder_tag != encoder.model_name() {
        return Err(EstimatorError::EncoderMismatch {
            index: index.encoder_tag.clone(),
            encoder: encoder.model_name().to_string(),
        });
    }
    let text = query_text(problem);
    let p = encoder.embed(&text, Granularity::Pooled)?;
    let s = encoder.embed(&solution.code, Granularity::Pooled)?;
    let query = QueryVectors { problem: p.vector(), solution: s.vector() };
    let context = retrieve_balanced(query, index, cfg)?;
    let (prompt, pairs) = fit_prompt(template, &context, (&text, &solution.code), predictor.config().max_prompt_chars)?;
    let post = predictor.yes_no_posterior(&prompt, Some(&subject_key(&solution.problem_id, &solution.solution_id)))?;
    Ok(Scored {
        score: QualityScore {
            problem_id: solution.problem_id.clone(),
            solution_id: solution.solution_id.clone(),
            method,
            score: post.p_yes,
            k_used: Some(cfg.k),
            alpha_used: Some(cfg.alpha),
            context_example_ids: Some(context.truncated(pairs).example_ids()),
        },
        prompt: Some(prompt),
    })
}

fn sibling_check(solution: &CandidateSolution, siblings: &[&CandidateSolution]) -> Result<(), EstimatorError> {
    if siblings.is_empty() {
        return Err(EstimatorError::NoSiblings(subject_key(&solution.problem_id, &solution.solution_id)));
    }
    Ok(())
}

fn baseline_score(solution: &CandidateSolution, method: Method, score: f64) -> Scored {
    Scored {
        score: QualityScore {
            problem_id: solution.problem_id.clone(),
            solution_id: solution.solution_id.clone(),
            method,
            score,
            k_used: None,
            alpha_used: None,
            context_example_ids: None,
        },
        prompt: None,
    }
}

/// Mean classifier-vector cosine between the target and its siblings.
pub fn score_els(
    _problem: &ProblemSpec,
    target: &CandidateSolution,
    siblings: &[&CandidateSolution],
    encoder: &Gateway,
) -> Result<Scored, EstimatorError> {
    sibling_check(target, siblings)?;
    let t = encoder.embed(&target.code, Granularity::Classifier)?;
    let sib = siblings
        .iter()
        .map(|s| encoder.embed(&s.code, Granularity::Classifier))
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&[f32]> = sib.iter().map(|e| e.vector()).collect();
    let score = mean_cosine(t.vector(), &refs).expect("siblings checked");
    Ok(baseline_score(target, Method::Els, score))
}

/// Mean greedy-matching token F1 between the target and its siblings.
pub fn score_tls(
    _problem: &ProblemSpec,
    target: &CandidateSolution,
    siblings: &[&CandidateSolution],
    encoder: &Gateway,
) -> Result<Scored, EstimatorError> {
    sibling_check(target, siblings)?;
    let t = encoder.embed(&target.code, Granularity::PerToken)?;
    let mut total = 0.0;
    for s in siblings {
        let e = encoder.embed(&s.code, Granularity::PerToken)?;
        total += greedy_f1(&t.vectors, &e.vectors).ok_or(GatewayError::EmptyInput("token sequence"))?.f1;
    }
    Ok(baseline_score(target, Method::Tls, total / siblings.len() as f64))
}
