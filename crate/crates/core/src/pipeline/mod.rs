//! Staged, manifest-tracked orchestration of a full experiment.
//!
//! Each stage writes into `<out>/<stage>/` and finishes by writing a
//! `manifest.json` holding the config hash, the digests of its upstream
//! manifests and the digests of its own outputs. A stage whose manifest
//! still matches is skipped; a stage whose upstream is missing or stale
//! refuses to run.

mod artifacts;
mod config;
mod stages;

use crate::corpus::CorpusError;
use crate::evaluation::EvalError;
use crate::gateway::{Role, Transport};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub use artifacts::{read_jsonl, read_manifest, StageManifest, MANIFEST};
pub use config::{apply_override, Backends, DatasetConfig, NeighborhoodSettings, RunConfig, RunnerSpec, SplitConfig};
pub use stages::{ScoreRecord, SetSummary};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{stage} artifact missing: run `codeqe {stage}` first")]
    Missing { stage: Stage },
    #[error("{stage} artifact is stale ({reason}): rerun `codeqe {stage}`")]
    Stale { stage: Stage, reason: String },
    #[error("mixed provenance: {0}")]
    MixedProvenance(String),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("dataset: {0}")]
    Corpus(#[from] CorpusError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("artifact: {0}")]
    Artifact(String),
    #[error("evaluation: {0}")]
    Evaluation(#[from] EvalError),
    #[error("{0}")]
    Other(String),
}

impl PipelineError {
    /// 2 config, 3 missing or inconsistent upstream, 4 backend, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Corpus(_) => 2,
            Self::Missing { .. } | Self::Stale { .. } | Self::MixedProvenance(_) => 3,
            Self::Backend(_) => 4,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Generate,
    Label,
    Index,
    Predict,
    Tune,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Generate,
        Stage::Label,
        Stage::Index,
        Stage::Predict,
        Stage::Tune,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ingest => "ingest",
            Self::Generate => "generate",
            Self::Label => "label",
            Self::Index => "index",
            Self::Predict => "predict",
            Self::Tune => "tune",
            Self::Evaluate => "evaluate",
            Self::Report => "report",
        }
    }

    /// Stages whose artifacts this stage reads directly.
    pub fn upstream(self) -> &'static [Stage] {
        use Stage::*;
        match self {
            Ingest => &[],
            Generate => &[Ingest],
            Label => &[Ingest, Generate],
            Index => &[Ingest, Generate, Label],
            Predict => &[Ingest, Generate, Label, Index],
            Tune => &[Label, Predict],
            Evaluate => &[Label, Predict, Tune],
            Report => &[Evaluate],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|st| st.as_str() == s).ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: Stage,
    /// Artifacts were already up to date.
    pub skipped: bool,
}

pub struct Pipeline {
    cfg: RunConfig,
    out: PathBuf,
    config_hash: String,
    transports: HashMap<Role, Arc<dyn Transport>>,
}

impl Pipeline {
    /// `out` wins over the config's `out_dir`; one of them is required.
    pub fn new(cfg: RunConfig, out: Option<PathBuf>) -> Result<Self, PipelineError> {
        let out = out
            .or_else(|| cfg.out_dir.clone())
            .ok_or_else(|| PipelineError::Config("out_dir: not set (use --out or out_dir in the config)".into()))?;
        let config_hash = cfg.config_hash();
        Ok(Self { cfg, out, config_hash, transports: HashMap::new() })
    }

    /// Replaces the transport a backend role would build from its config.
    pub fn with_transport(mut self, role: Role, transport: Arc<dyn Transport>) -> Self {
        self.transports.insert(role, transport);
        self
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    fn upstream_digests(&self, stage: Stage) -> Result<BTreeMap<Stage, String>, PipelineError> {
        let mut digests = BTreeMap::new();
        for &up in stage.upstream() {
            let (manifest, digest) = read_manifest(&self.out, up)?.ok_or(PipelineError::Missing { stage: up })?;
            if manifest.config_hash != self.config_hash {
                return Err(PipelineError::Stale { stage: up, reason: "config changed since it ran".into() });
            }
            if !artifacts::outputs_intact(&self.out, &manifest) {
                return Err(PipelineError::Stale { stage: up, reason: "outputs modified on disk".into() });
            }
            digests.insert(up, digest);
        }
        Ok(digests)
    }

    /// Every stage ran under this config and read exactly the upstream
    /// artifacts currently on disk.
    fn check_provenance_chain(&self) -> Result<BTreeMap<Stage, String>, PipelineError> {
        let mut digests = BTreeMap::new();
        let mut manifests = BTreeMap::new();
        for stage in Stage::ALL.into_iter().filter(|s| *s != Stage::Report) {
            let (m, d) = read_manifest(&self.out, stage)?.ok_or(PipelineError::Missing { stage })?;
            if m.config_hash != self.config_hash {
                return Err(PipelineError::MixedProvenance(format!(
                    "{stage} was produced under config {} but the current config is {}",
                    short(&m.config_hash),
                    short(&self.config_hash)
                )));
            }
            digests.insert(stage, d);
            manifests.insert(stage, m);
        }
        for (stage, m) in &manifests {
            for (up, recorded) in &m.upstream {
                if digests.get(up) != Some(recorded) {
                    return Err(PipelineError::MixedProvenance(format!(
                        "{stage} was built from a different {up} run than the one on disk"
                    )));
                }
            }
            if !artifacts::outputs_intact(&self.out, m) {
                return Err(PipelineError::MixedProvenance(format!("{stage} outputs were modified after it ran")));
            }
        }
        Ok(digests)
    }

    fn up_to_date(
        &self,
        stage: Stage,
        upstream: &BTreeMap<Stage, String>,
        inputs: &BTreeMap<String, String>,
    ) -> Result<bool, PipelineError> {
        Ok(match read_manifest(&self.out, stage) {
            Ok(Some((m, _))) => {
                m.config_hash == self.config_hash
                    && &m.upstream == upstream
                    && &m.inputs == inputs
                    && artifacts::outputs_intact(&self.out, &m)
            }
            Ok(None) | Err(PipelineError::Stale { .. }) => false,
            Err(e) => return Err(e),
        })
    }

    pub fn run_stage(&self, stage: Stage) -> Result<StageOutcome, PipelineError> {
        let upstream = self.upstream_digests(stage)?;
        if stage == Stage::Report {
            self.check_provenance_chain()?;
        }
        let inputs = match stage {
            Stage::Ingest => self.ingest_inputs()?,
            _ => BTreeMap::new(),
        };
        if self.up_to_date(stage, &upstream, &inputs)? {
            log::info!("{stage}: up to date");
            return Ok(StageOutcome { stage, skipped: true });
        }
        log::info!("{stage}: running");
        let mut writer = artifacts::StageWriter::create(&self.out, stage)?;
        match stage {
            Stage::Ingest => self.ingest(&mut writer)?,
            Stage::Generate => self.generate(&mut writer)?,
            Stage::Label => self.label(&mut writer)?,
            Stage::Index => self.index(&mut writer)?,
            Stage::Predict => self.predict(&mut writer)?,
            Stage::Tune => self.tune(&mut writer)?,
            Stage::Evaluate => self.evaluate(&mut writer)?,
            Stage::Report => self.report(&mut writer)?,
        }
        writer.finish(&self.config_hash, upstream, inputs)?;
        Ok(StageOutcome { stage, skipped: false })
    }

    pub fn run_all(&self) -> Result<Vec<StageOutcome>, PipelineError> {
        Stage::ALL.into_iter().map(|s| self.run_stage(s)).collect()
    }
}

fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}
