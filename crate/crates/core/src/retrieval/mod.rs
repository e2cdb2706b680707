//! Dual correct/incorrect example stores and balanced neighbourhood retrieval.
//!
//! Similarity between a query pair and a stored example is the field-weighted
//! sum `alpha * (problem . problem') + (1 - alpha) * (solution . solution')`
//! over unit vectors. Retrieval is an exhaustive scan of each store.

mod persist;

use crate::executor::Verdict;
use crate::gateway::{Gateway, GatewayError, Granularity};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;

pub use persist::{load_index, save_index, IndexManifest};

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("vector dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("encoder mismatch: index built with `{index}`, query embedded with `{query}`")]
    EncoderMismatch { index: String, query: String },
    #[error("the {0} store is empty")]
    EmptyStore(ExampleLabel),
    #[error("no labeled examples to index")]
    EmptyInput,
    #[error("duplicate example id `{0}`")]
    DuplicateExample(String),
    #[error("invalid neighbourhood config: {0}")]
    InvalidConfig(String),
    #[error("encoder: {0}")]
    Encoder(#[from] GatewayError),
    #[error("index i/o at {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("index format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleLabel {
    Pass,
    Incorrect,
}

impl fmt::Display for ExampleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pass => "correct",
            Self::Incorrect => "incorrect",
        })
    }
}

impl ExampleLabel {
    /// Pass maps to the correct store; fail and timeout to the incorrect one.
    pub fn from_verdict(v: Verdict) -> Option<Self> {
        match v {
            Verdict::Pass => Some(Self::Pass),
            Verdict::Fail | Verdict::Timeout => Some(Self::Incorrect),
            Verdict::InfraError => None,
        }
    }
}

/// A labeled training pair before embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub problem_id: String,
    pub solution_id: String,
    pub problem_text: String,
    pub solution_text: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedExample {
    pub example_id: String,
    pub problem_id: String,
    pub solution_id: String,
    pub problem_vec: Vec<f32>,
    pub solution_vec: Vec<f32>,
    pub label: ExampleLabel,
    pub problem_text: String,
    pub solution_text: String,
}

pub fn example_id(problem_id: &str, solution_id: &str) -> String {
    format!("{problem_id}::{solution_id}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleIndex {
    pub encoder_tag: String,
    pub dim: usize,
    pub correct_store: Vec<EmbeddedExample>,
    pub incorrect_store: Vec<EmbeddedExample>,
}

impl ExampleIndex {
    pub fn new(encoder_tag: impl Into<String>, dim: usize) -> Self {
        Self {
            encoder_tag: encoder_tag.into(),
            dim,
            correct_store: Vec::new(),
            incorrect_store: Vec::new(),
        }
    }

    /// Adds an example to the store matching its label.
    pub fn insert(&mut self, example: EmbeddedExample) -> Result<(), RetrievalError> {
        for v in [&example.problem_vec, &example.solution_vec] {
            if v.len() != self.dim {
                return Err(RetrievalError::DimensionMismatch { expected: self.dim, got: v.len() });
            }
        }
        match example.label {
            ExampleLabel::Pass => self.correct_store.push(example),
            ExampleLabel::Incorrect => self.incorrect_store.push(example),
        }
        Ok(())
    }

    pub fn store(&self, label: ExampleLabel) -> &[EmbeddedExample] {
        match label {
            ExampleLabel::Pass => &self.correct_store,
            ExampleLabel::Incorrect => &self.incorrect_store,
        }
    }

    pub fn len(&self) -> usize {
        self.correct_store.len() + self.incorrect_store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks store/label agreement, id uniqueness and dimensions.
    pub fn check(&self) -> Result<(), RetrievalError> {
        let mut seen = HashSet::new();
        for (label, store) in [(ExampleLabel::Pass, &self.correct_store), (ExampleLabel::Incorrect, &self.incorrect_store)] {
            for ex in store {
                if ex.label != label {
                    return Err(RetrievalError::Format(format!("`{}` is in the {label} store", ex.example_id)));
                }
                if !seen.insert(ex.example_id.as_str()) {
                    return Err(RetrievalError::DuplicateExample(ex.example_id.clone()));
                }
                for v in [&ex.problem_vec, &ex.solution_vec] {
                    if v.len() != self.dim {
                        return Err(RetrievalError::DimensionMismatch { expected: self.dim, got: v.len() });
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodConfig {
    /// Examples per class.
    pub k: usize,
    pub alpha: f64,
}

impl NeighborhoodConfig {
    pub const PROBLEM_ONLY: f64 = 1.0;
    pub const SOLUTION_ONLY: f64 = 0.0;
    pub const COMBINED: f64 = 0.5;

    pub fn new(k: usize, alpha: f64) -> Result<Self, RetrievalError> {
        let cfg = Self { k, alpha };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.k == 0 {
            return Err(RetrievalError::InvalidConfig("k must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(RetrievalError::InvalidConfig(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Embedded query pair: the problem text and the candidate under assessment.
#[derive(Debug, Clone, Copy)]
pub struct QueryVectors<'a> {
    pub problem: &'a [f32],
    pub solution: &'a [f32],
}

fn dot_checked(a: &[f32], b: &[f32]) -> Result<f64, RetrievalError> {
    if a.len() != b.len() {
        return Err(RetrievalError::DimensionMismatch { expected: b.len(), got: a.len() });
    }
    Ok(crate::util::dot(a, b))
}

/// Field-weighted similarity between a query pair and a stored example.
pub fn sigma(query: QueryVectors<'_>, example: &EmbeddedExample, alpha: f64) -> Result<f64, RetrievalError> {
    let p = dot_checked(query.problem, &example.problem_vec)?;
    let s = dot_checked(query.solution, &example.solution_vec)?;
    Ok(alpha * p + (1.0 - alpha) * s)
}

#[derive(Debug, Clone, Copy)]
pub struct Neighbor<'a> {
    pub example: &'a EmbeddedExample,
    pub sigma: f64,
}

/// Equal numbers of correct and incorrect neighbours, each sorted by
/// descending similarity with ties broken by ascending example id.
#[derive(Debug, Clone, Default)]
pub struct BalancedContext<'a> {
    pub correct: Vec<Neighbor<'a>>,
    pub incorrect: Vec<Neighbor<'a>>,
}

impl<'a> BalancedContext<'a> {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Number of (correct, incorrect) pairs.
    pub fn pairs(&self) -> usize {
        self.correct.len().min(self.incorrect.len())
    }

    pub fn is_empty(&self) -> bool {
        self.pairs() == 0
    }

    /// correct_1, incorrect_1, correct_2, incorrect_2, ...
    pub fn interleaved(&self) -> impl Iterator<Item = &Neighbor<'a>> {
        self.correct.iter().zip(&self.incorrect).flat_map(|(c, i)| [c, i])
    }

    /// Keeps the `pairs` most similar pairs.
    pub fn truncated(&self, pairs: usize) -> Self {
        Self {
            correct: self.correct.iter().take(pairs).copied().collect(),
            incorrect: self.incorrect.iter().take(pairs).copied().collect(),
        }
    }

    pub fn example_ids(&self) -> Vec<String> {
        self.interleaved().map(|n| n.example.example_id.clone()).collect()
    }
}

fn rank_order(a: &Neighbor<'_>, b: &Neighbor<'_>) -> Ordering {
    b.sigma.total_cmp(&a.sigma).then_with(|| a.example.example_id.cmp(&b.example.example_id))
}

fn top_k<'a>(
    store: &'a [EmbeddedExample],
    query: QueryVectors<'_>,
    alpha: f64,
    k: usize,
) -> Result<Vec<Neighbor<'a>>, RetrievalError> {
    let mut scored = store
        .iter()
        .map(|example| Ok(Neighbor { example, sigma: sigma(query, example, alpha)? }))
        .collect::<Result<Vec<_>, RetrievalError>>()?;
    if k < scored.len() {
        scored.select_nth_unstable_by(k, rank_order);
        scored.truncate(k);
    }
    scored.sort_by(rank_order);
    Ok(scored)
}

/// Exhaustive top-`k'` from each store, where `k' = min(k, |correct|, |incorrect|)`.
pub fn retrieve_balanced<'a>(
    query: QueryVectors<'_>,
    index: &'a ExampleIndex,
    cfg: &NeighborhoodConfig,
) -> Result<BalancedContext<'a>, RetrievalError> {
    cfg.validate()?;
    for label in [ExampleLabel::Pass, ExampleLabel::Incorrect] {
        if index.store(label).is_empty() {
            return Err(RetrievalError::EmptyStore(label));
        }
    }
    for v in [query.problem, query.solution] {
        if v.len() != index.dim {
            return Err(RetrievalError::DimensionMismatch { expected: index.dim, got: v.len() });
        }
    }
    let k = cfg.k.min(index.correct_store.len()).min(index.incorrect_store.len());
    Ok(BalancedContext {
        correct: top_k(&index.correct_store, query, cfg.alpha, k)?,
        incorrect: top_k(&index.incorrect_store, query, cfg.alpha, k)?,
    })
}

/// Embeds both fields of every usable example and files it by label.
/// Infra-error examples are skipped.
pub fn build_index(examples: &[LabeledExample], encoder: &Gateway) -> Result<ExampleIndex, RetrievalError> {
    use rayon::prelude::*;

    let usable: Vec<(&LabeledExample, ExampleLabel)> = examples
        .iter()
        .filter_map(|e| ExampleLabel::from_verdict(e.verdict).map(|l| (e, l)))
        .collect();
    if usable.is_empty() {
        return Err(RetrievalError::EmptyInput);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(encoder.config().max_parallel.max(1))
        .build()
        .map_err(|e| RetrievalError::InvalidConfig(e.to_string()))?;
    let embedded: Vec<EmbeddedExample> = pool.install(|| {
        usable
            .par_iter()
            .map(|(ex, label)| {
                let p = encoder.embed(&ex.problem_text, Granularity::Pooled)?;
                let s = encoder.embed(&ex.solution_text, Granularity::Pooled)?;
                Ok(EmbeddedExample {
                    example_id: example_id(&ex.problem_id, &ex.solution_id),
                    problem_id: ex.problem_id.clone(),
                    solution_id: ex.solution_id.clone(),
                    problem_vec: p.vectors.into_iter().next().unwrap_or_default(),
                    solution_vec: s.vectors.into_iter().next().unwrap_or_default(),
                    label: *label,
                    problem_text: ex.problem_text.clone(),
                    solution_text: ex.solution_text.clone(),
                })
            })
            .collect::<Result<Vec<_>, RetrievalError>>()
    })?;
    let dim = embedded[0].problem_vec.len();
    let mut index = ExampleIndex::new(encoder.model_name(), dim);
    for ex in embedded {
        index.insert(ex)?;
    }
    index.check()?;
    Ok(index)
}
