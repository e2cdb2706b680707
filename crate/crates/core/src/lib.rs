//! Estimating the functional correctness of generated code without running it.
//!
//! The crate is organised along the experiment workflow:
//!
//! - [`corpus`]: benchmark loading, validation and train/dev splitting.
//! - [`executor`]: ground-truth labels from running test suites in subprocess runners.
//! - [`gateway`]: generator, predictor and encoder backends (OpenAI-compatible HTTP or
//!   deterministic stubs) behind a content-addressed cache.
//! - [`retrieval`]: the dual correct/incorrect example index and balanced neighbourhoods.
//! - [`estimators`]: few-shot, zero-shot and embedding-similarity quality scores.
//! - [`evaluation`]: global and per-problem nDCG, `k` tuning and sensitivity sweeps.
//! - [`pipeline`]: staged, manifest-tracked orchestration driven by a TOML run config.

pub mod corpus;
pub mod estimators;
pub mod evaluation;
pub mod executor;
pub mod gateway;
pub mod pipeline;
pub mod retrieval;
pub mod util;

pub use corpus::{CandidateSolution, Corpus, DatasetSplit, ProblemSpec, TestSuite};
pub use estimators::{Method, QualityScore};
pub use executor::{CorrectnessLabel, Verdict};
pub use retrieval::{ExampleIndex, NeighborhoodConfig};
