//! Benchmark corpora: the canonical in-memory data model, format adapters,
//! validation and the seeded train/dev split.

mod load;
mod split;
pub mod synthetic;
mod validate;

pub use load::{export_native, load_dataset, load_dataset_with, parse_dataset, DatasetFormat, LoadOptions};
pub use split::{split_train_dev, DatasetSplit};
pub use validate::{validate_corpus, ValidationIssue, ValidationReport};

use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Generator tag given to reference solutions shipped with a benchmark.
pub const CANONICAL_TAG: &str = "canonical";

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate problem id `{id}`")]
    DuplicateProblem { line: usize, id: String },
    #[error("unknown dataset format `{0}` (expected mbpp-style, humaneval-style or native)")]
    UnknownFormat(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
}

/// A natural-language programming task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub id: String,
    pub description: String,
    pub entry_point: Option<String>,
    pub language: String,
    pub setup_code: Option<String>,
}

impl ProblemSpec {
    /// Text used for embedding and prompt rendering.
    pub fn text(&self) -> &str {
        &self.description
    }
}

/// Ordered assertion statements for one problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSuite {
    pub problem_id: String,
    pub cases: Vec<String>,
    pub setup_code: Option<String>,
}

/// One generated (or canonical) program for a problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSolution {
    pub problem_id: String,
    pub solution_id: String,
    pub code: String,
    pub rank_hint: Option<u32>,
    pub generator_tag: String,
}

impl CandidateSolution {
    pub fn key(&self) -> (String, String) {
        (self.problem_id.clone(), self.solution_id.clone())
    }
}

/// Problems, suites and solutions loaded from one file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub problems: Vec<ProblemSpec>,
    pub suites: Vec<TestSuite>,
    pub solutions: Vec<CandidateSolution>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.problems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.problems.is_empty()
    }

    pub fn problem(&self, id: &str) -> Option<&ProblemSpec> {
        self.problems.iter().find(|p| p.id == id)
    }

    pub fn suite(&self, problem_id: &str) -> Option<&TestSuite> {
        self.suites.iter().find(|s| s.problem_id == problem_id)
    }

    /// Keeps only the problems (and their suites and solutions) whose id is in `ids`.
    pub fn restrict(&self, ids: &[String]) -> Corpus {
        let keep: std::collections::HashSet<&str> = ids.iter().map(String::as_str).collect();
        Corpus {
            problems: self.problems.iter().filter(|p| keep.contains(p.id.as_str())).cloned().collect(),
            suites: self.suites.iter().filter(|s| keep.contains(s.problem_id.as_str())).cloned().collect(),
            solutions: self
                .solutions
                .iter()
                .filter(|s| keep.contains(s.problem_id.as_str()))
                .cloned()
                .collect(),
        }
    }
}
