#![allow(dead_code)]

use codeqe_core::corpus::synthetic::mini_corpus_jsonl;
use codeqe_core::pipeline::RunConfig;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Writes a 20-problem training file, a 20-problem test file and a stub
/// config into `dir`; returns the config path.
pub fn golden_workspace(dir: &Path, predictor_endpoint: &str) -> PathBuf {
    std::fs::write(dir.join("train.jsonl"), mini_corpus_jsonl("trn", 20, 11)).unwrap();
    std::fs::write(dir.join("test.jsonl"), mini_corpus_jsonl("tst", 20, 12)).unwrap();
    let config = format!(
        r#"seed = 2024

[train]
name = "syn"
path = "train.jsonl"
format = "mbpp-style"

[[test_sets]]
name = "syn-test"
path = "test.jsonl"
format = "mbpp-style"

[backends.generator]
endpoint = "stub"
model_name = "stub-gen"

[backends.predictor]
endpoint = "{predictor_endpoint}"
model_name = "stub-pred"

[backends.encoder]
endpoint = "stub"
model_name = "stub-enc"
stub_dim = 32
"#
    );
    let path = dir.join("run.toml");
    std::fs::write(&path, config).unwrap();
    path
}

pub fn load(config: &Path, sets: &[&str]) -> RunConfig {
    let sets: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
    RunConfig::load(config, &sets).unwrap()
}

/// Relative path → bytes for every file under `root`.
pub fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}
