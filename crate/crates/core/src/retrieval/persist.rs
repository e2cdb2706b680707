//! On-disk layout: `manifest.json` plus one JSONL file per store.

use super::{EmbeddedExample, ExampleIndex, ExampleLabel, RetrievalError};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

const MANIFEST: &str = "manifest.json";
const CORRECT: &str = "correct.jsonl";
const INCORRECT: &str = "incorrect.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub encoder_tag: String,
    pub dim: usize,
    pub correct: usize,
    pub incorrect: usize,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RetrievalError + '_ {
    move |source| RetrievalError::Io { path: path.to_path_buf(), source }
}

fn write_store(path: &Path, store: &[EmbeddedExample]) -> Result<(), RetrievalError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for ex in store {
        let line = serde_json::to_string(ex).map_err(|e| RetrievalError::Format(e.to_string()))?;
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_store(path: &Path) -> Result<Vec<EmbeddedExample>, RetrievalError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let ex = serde_json::from_str(&line)
            .map_err(|e| RetrievalError::Format(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(ex);
    }
    Ok(out)
}

pub fn save_index(index: &ExampleIndex, dir: &Path) -> Result<IndexManifest, RetrievalError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_store(&dir.join(CORRECT), &index.correct_store)?;
    write_store(&dir.join(INCORRECT), &index.incorrect_store)?;
    let manifest = IndexManifest {
        encoder_tag: index.encoder_tag.clone(),
        dim: index.dim,
        correct: index.correct_store.len(),
        incorrect: index.incorrect_store.len(),
    };
    let path = dir.join(MANIFEST);
    let body = serde_json::to_string_pretty(&manifest).map_err(|e| RetrievalError::Format(e.to_string()))?;
    std::fs::write(&path, body + "\n").map_err(io_err(&path))?;
    Ok(manifest)
}

pub fn load_index(dir: &Path) -> Result<ExampleIndex, RetrievalError> {
    let path = dir.join(MANIFEST);
    let raw = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: IndexManifest =
        serde_json::from_str(&raw).map_err(|e| RetrievalError::Format(format!("{}: {e}", path.display())))?;
    let index = ExampleIndex {
        encoder_tag: manifest.encoder_tag,
        dim: manifest.dim,
        correct_store: read_store(&dir.join(CORRECT))?,
        incorrect_store: read_store(&dir.join(INCORRECT))?,
    };
    if index.correct_store.len() != manifest.correct || index.incorrect_store.len() != manifest.incorrect {
        return Err(RetrievalError::Format(format!(
            "store sizes {}/{} disagree with manifest {}/{}",
            index.correct_store.len(),
            index.incorrect_store.len(),
            manifest.correct,
            manifest.incorrect
        )));
    }
    index.check()?;
    debug_assert!(index.correct_store.iter().all(|e| e.label == ExampleLabel::Pass));
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let mut idx = ExampleIndex::new("enc", 3);
        let v = |a: f32, b: f32, c: f32| {
            let mut v = vec![a, b, c];
            crate::util::normalize(&mut v);
            v
        };
        for (i, label) in [ExampleLabel::Pass, ExampleLabel::Incorrect, ExampleLabel::Pass].into_iter().enumerate() {
            idx.insert(EmbeddedExample {
                example_id: format!("p::s{i}"),
                problem_id: "p".into(),
                solution_id: format!("s{i}"),
                problem_vec: v(0.1 * i as f32 + 0.3, 0.7, -0.2),
                solution_vec: v(1.0 / 3.0, -0.25, 0.9 - i as f32),
                label,
                problem_text: "text".into(),
                solution_text: "def f():\n    return 1".into(),
            })
            .unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let m = save_index(&idx, dir.path()).unwrap();
        assert_eq!((m.correct, m.incorrect), (2, 1));
        assert_eq!(load_index(dir.path()).unwrap(), idx);
    }

    #[test]
    fn truncated_store_is_detected() {
        let mut idx = ExampleIndex::new("enc", 1);
        for (i, label) in [ExampleLabel::Pass, ExampleLabel::Incorrect].into_iter().enumerate() {
            idx.insert(EmbeddedExample {
                example_id: format!("e{i}"),
                problem_id: "p".into(),
                solution_id: format!("s{i}"),
                problem_vec: vec![1.0],
                solution_vec: vec![1.0],
                label,
                problem_text: String::new(),
                solution_text: String::new(),
            })
            .unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        save_index(&idx, dir.path()).unwrap();
        std::fs::write(dir.path().join(CORRECT), "").unwrap();
        assert!(matches!(load_index(dir.path()), Err(RetrievalError::Format(_))));
    }
}
