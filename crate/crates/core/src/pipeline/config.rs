//! Run configuration: one TOML file plus `key=value` overrides.

use super::PipelineError;
use crate::corpus::DatasetFormat;
use crate::estimators::{Method, PromptTemplate};
use crate::executor::SandboxConfig;
use crate::gateway::{BackendConfig, GenerationConfig, Role};
use crate::util::{derive_seed, sha256_hex};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub path: PathBuf,
    pub format: DatasetFormat,
    #[serde(default = "default_language")]
    pub language: String,
}

fn default_language() -> String {
    "python".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub dev_fraction: f64,
    /// Derived from the root seed when unset.
    pub seed: Option<u64>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { dev_fraction: 0.1, seed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Backends {
    pub generator: BackendConfig,
    #[serde(default)]
    pub predictor: Option<BackendConfig>,
    #[serde(default)]
    pub encoder: Option<BackendConfig>,
}

/// `"stub"` for the in-process evaluator, or a command line whose process
/// speaks the runner protocol on stdin/stdout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RunnerSpec {
    Builtin(String),
    Command(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeighborhoodSettings {
    /// Examples per class tried during tuning and sweeps.
    pub k_grid: Vec<usize>,
}

impl Default for NeighborhoodSettings {
    fn default() -> Self {
        Self { k_grid: (1..=5).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub train: DatasetConfig,
    #[serde(default)]
    pub test_sets: Vec<DatasetConfig>,
    #[serde(default)]
    pub split: SplitConfig,
    pub backends: Backends,
    #[serde(default)]
    pub generation: GenerationConfig,
    #[serde(default)]
    pub sandbox: SandboxConfig,
    #[serde(default = "default_runners")]
    pub runners: BTreeMap<String, RunnerSpec>,
    #[serde(default)]
    pub neighborhood: NeighborhoodSettings,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub prompt: PromptTemplate,
    /// Also write every rendered predictor prompt.
    #[serde(default)]
    pub audit_prompts: bool,
}

fn default_runners() -> BTreeMap<String, RunnerSpec> {
    BTreeMap::from([("python".to_string(), RunnerSpec::Builtin("stub".into()))])
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn cfg_err(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

/// Sets `path` (dotted) in `root` to `raw`, parsed as a TOML value when it
/// parses and as a plain string otherwise.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<(), PipelineError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| cfg_err(format!("override `{assignment}` is not of the form key=value")))?;
    let path = path.trim();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(cfg_err(format!("override key `{path}` is malformed")));
    }
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut table = root;
    for (depth, key) in parents.iter().enumerate() {
        let entry = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| cfg_err(format!("override `{path}`: `{}` is not a table", keys[..=depth].join("."))))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

/// Fills role tags and per-consumer seeds that were left implicit.
fn fill_implicit(root: &mut toml::Table) -> Result<(), PipelineError> {
    let seed = match root.get("seed") {
        Some(toml::Value::Integer(s)) if *s >= 0 => *s as u64,
        Some(_) => return Err(cfg_err("seed: expected a non-negative integer")),
        None => return Err(cfg_err("seed: missing")),
    };
    let as_value = |s: u64| toml::Value::Integer((s >> 1) as i64);
    if let Some(toml::Value::Table(backends)) = root.get_mut("backends") {
        for (slot, role) in [("generator", Role::Generator), ("predictor", Role::Predictor), ("encoder", Role::Encoder)] {
            if let Some(toml::Value::Table(b)) = backends.get_mut(slot) {
                b.entry("role").or_insert_with(|| toml::Value::String(role.to_string()));
                b.entry("seed").or_insert_with(|| as_value(derive_seed(seed, &format!("backend/{slot}"))));
            }
        }
    }
    for (section, label) in [("generation", "generation"), ("split", "split")] {
        let entry = root.entry(section).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let table = entry.as_table_mut().ok_or_else(|| cfg_err(format!("{section}: expected a table")))?;
        table.entry("seed").or_insert_with(|| as_value(derive_seed(seed, label)));
    }
    Ok(())
}

impl RunConfig {
    /// Parses TOML text, applies overrides, fills implicit fields and validates.
    /// Relative paths resolve against `base_dir`.
    pub fn from_toml_str(text: &str, overrides: &[String], base_dir: &Path) -> Result<Self, PipelineError> {
        let mut root: toml::Table = toml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        fill_implicit(&mut root)?;
        let mut cfg: RunConfig = toml::Value::Table(root).try_into().map_err(|e: toml::de::Error| cfg_err(e.to_string()))?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, overrides, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.train.path);
        self.test_sets.iter_mut().for_each(|d| fix(&mut d.path));
        if let Some(out) = &mut self.out_dir {
            fix(out);
        }
        for b in self.backend_slots_mut() {
            if let Some(dir) = &mut b.cache_dir {
                fix(dir);
            }
        }
    }

    fn backend_slots_mut(&mut self) -> impl Iterator<Item = &mut BackendConfig> {
        std::iter::once(&mut self.backends.generator)
            .chain(self.backends.predictor.as_mut())
            .chain(self.backends.encoder.as_mut())
    }

    pub fn datasets(&self) -> impl Iterator<Item = &DatasetConfig> {
        std::iter::once(&self.train).chain(&self.test_sets)
    }

    pub fn split_seed(&self) -> u64 {
        self.split.seed.expect("filled at load time")
    }

    /// Sorted, de-duplicated k grid.
    pub fn k_grid(&self) -> Vec<usize> {
        let mut grid = self.neighborhood.k_grid.clone();
        grid.sort_unstable();
        grid.dedup();
        grid
    }

    pub fn fs_methods(&self) -> Vec<Method> {
        self.methods.iter().copied().filter(|m| m.is_few_shot()).collect()
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let mut names = std::collections::BTreeSet::new();
        for (field, d) in std::iter::once(("train".to_string(), &self.train))
            .chain(self.test_sets.iter().enumerate().map(|(i, d)| (format!("test_sets[{i}]"), d)))
        {
            if d.name.is_empty() || !d.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
                return Err(cfg_err(format!("{field}.name: `{}` must be non-empty [A-Za-z0-9._-]", d.name)));
            }
            if field != "train" && (d.name == "train" || d.name == "dev") {
                return Err(cfg_err(format!("{field}.name: `{}` is reserved", d.name)));
            }
            if !names.insert(d.name.as_str()) {
                return Err(cfg_err(format!("{field}.name: duplicate dataset name `{}`", d.name)));
            }
            if !d.path.is_file() {
                return Err(cfg_err(format!("{field}.path: {} does not exist", d.path.display())));
            }
        }
        if self.test_sets.is_empty() {
            return Err(cfg_err("test_sets: at least one test set is required"));
        }
        if !(self.split.dev_fraction > 0.0 && self.split.dev_fraction < 1.0) {
            return Err(cfg_err(format!("split.dev_fraction: must lie in (0, 1), got {}", self.split.dev_fraction)));
        }
        if self.methods.is_empty() {
            return Err(cfg_err("methods: at least one method is required"));
        }
        let k_grid = self.k_grid();
        if k_grid.is_empty() || k_grid[0] == 0 {
            return Err(cfg_err("neighborhood.k_grid: needs at least one k >= 1"));
        }
        for m in &self.methods {
            if m.uses_predictor() && self.backends.predictor.is_none() {
                return Err(cfg_err(format!("backends.predictor: required by method {m}")));
            }
            if *m != Method::Zs && self.backends.encoder.is_none() {
                return Err(cfg_err(format!("backends.encoder: required by method {m}")));
            }
        }
        for (slot, role, b) in [
            ("generator", Role::Generator, Some(&self.backends.generator)),
            ("predictor", Role::Predictor, self.backends.predictor.as_ref()),
            ("encoder", Role::Encoder, self.backends.encoder.as_ref()),
        ] {
            let Some(b) = b else { continue };
            if b.role != role {
                return Err(cfg_err(format!("backends.{slot}.role: expected {role}, got {}", b.role)));
            }
            if b.max_parallel == 0 {
                return Err(cfg_err(format!("backends.{slot}.max_parallel: must be >= 1")));
            }
            if b.endpoint == "oracle-stub" && role != Role::Predictor {
                return Err(cfg_err(format!("backends.{slot}.endpoint: oracle-stub is predictor-only")));
            }
        }
        if self.generation.n == 0 {
            return Err(cfg_err("generation.n: must be >= 1"));
        }
        if self.generation.n < 2 && self.methods.iter().any(|m| matches!(m, Method::Els | Method::Tls)) {
            return Err(cfg_err("generation.n: ELS and TLS need at least 2 solutions per problem"));
        }
        self.sandbox.validate().map_err(|e| cfg_err(format!("sandbox: {e}")))?;
        for (lang, spec) in &self.runners {
            match spec {
                RunnerSpec::Builtin(name) if name == "stub" => {}
                RunnerSpec::Builtin(name) => {
                    return Err(cfg_err(format!("runners.{lang}: unknown builtin `{name}` (use \"stub\" or a command list)")))
                }
                RunnerSpec::Command(cmd) if cmd.is_empty() => {
                    return Err(cfg_err(format!("runners.{lang}: empty command")))
                }
                RunnerSpec::Command(_) => {}
            }
        }
        for d in self.datasets() {
            if !self.runners.contains_key(&d.language) {
                log::warn!("no runner for language `{}`; dataset `{}` will label as infra_error", d.language, d.name);
            }
        }
        Ok(())
    }

    /// Digest of everything except the output location.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        sha256_hex(serde_json::to_vec(&c).expect("config serializes"))
    }
}
