//! Stage directories, manifests and JSONL helpers.

use super::{PipelineError, Stage};
use crate::util::sha256_hex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const MANIFEST: &str = "manifest.json";

/// Provenance record written last by every stage. Paths are relative to the
/// stage directory; digests are SHA-256 of file bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: Stage,
    pub config_hash: String,
    /// Digest of each upstream stage's manifest file.
    pub upstream: BTreeMap<Stage, String>,
    /// Digests of files read from outside the output tree.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn io_error(path: &Path, source: std::io::Error) -> PipelineError {
    PipelineError::Io { path: path.to_path_buf(), source }
}

pub fn file_digest(path: &Path) -> Result<String, PipelineError> {
    std::fs::read(path).map(sha256_hex).map_err(|e| io_error(path, e))
}

pub fn stage_dir(out: &Path, stage: Stage) -> PathBuf {
    out.join(stage.as_str())
}

pub fn manifest_path(out: &Path, stage: Stage) -> PathBuf {
    stage_dir(out, stage).join(MANIFEST)
}

/// `None` when the stage has not produced a manifest yet.
pub fn read_manifest(out: &Path, stage: Stage) -> Result<Option<(StageManifest, String)>, PipelineError> {
    let path = manifest_path(out, stage);
    let bytes = match std::fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(io_error(&path, e)),
    };
    let manifest = serde_json::from_slice(&bytes).map_err(|e| PipelineError::Stale {
        stage,
        reason: format!("unreadable manifest: {e}"),
    })?;
    Ok(Some((manifest, sha256_hex(&bytes))))
}

/// Whether every recorded output still has its recorded digest.
pub fn outputs_intact(out: &Path, manifest: &StageManifest) -> bool {
    let dir = stage_dir(out, manifest.stage);
    manifest
        .outputs
        .iter()
        .all(|(rel, digest)| file_digest(&dir.join(rel)).is_ok_and(|d| &d == digest))
}

/// Collects a stage's outputs into a fresh directory.
pub struct StageWriter {
    stage: Stage,
    dir: PathBuf,
    outputs: BTreeMap<String, String>,
}

impl StageWriter {
    /// Clears any previous contents of the stage directory.
    pub fn create(out: &Path, stage: Stage) -> Result<Self, PipelineError> {
        let dir = stage_dir(out, stage);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        }
        std::fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        Ok(Self { stage, dir, outputs: BTreeMap::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, rel: &str, bytes: impl AsRef<[u8]>) -> Result<(), PipelineError> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
        }
        std::fs::write(&path, bytes.as_ref()).map_err(|e| io_error(&path, e))?;
        self.outputs.insert(rel.to_string(), sha256_hex(bytes.as_ref()));
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, rel: &str, value: &T) -> Result<(), PipelineError> {
        let mut body = serde_json::to_string_pretty(value).expect("artifact serializes");
        body.push('\n');
        self.write(rel, body)
    }

    pub fn write_jsonl<T: Serialize>(&mut self, rel: &str, items: &[T]) -> Result<(), PipelineError> {
        self.write(rel, to_jsonl(items))
    }

    /// Registers a file some other writer already put in the stage directory.
    pub fn record(&mut self, rel: &str) -> Result<(), PipelineError> {
        let digest = file_digest(&self.dir.join(rel))?;
        self.outputs.insert(rel.to_string(), digest);
        Ok(())
    }

    pub fn finish(
        self,
        config_hash: &str,
        upstream: BTreeMap<Stage, String>,
        inputs: BTreeMap<String, String>,
    ) -> Result<StageManifest, PipelineError> {
        let manifest = StageManifest {
            stage: self.stage,
            config_hash: config_hash.to_string(),
            upstream,
            inputs,
            outputs: self.outputs,
        };
        let path = self.dir.join(MANIFEST);
        let mut body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        body.push('\n');
        std::fs::write(&path, body).map_err(|e| io_error(&path, e))?;
        Ok(manifest)
    }
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("artifact serializes"));
        out.push('\n');
    }
    out
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PipelineError::Artifact(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Artifact(format!("{}: {e}", path.display())))
}
