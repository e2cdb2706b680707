//! Content-addressed response cache: one file per request, named by the
//! SHA-256 of the request document, holding the raw response body.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};

#[derive(Debug)]
pub struct ResponseCache {
    dir: Option<PathBuf>,
    memory: RwLock<HashMap<String, String>>,
    write_lock: Mutex<()>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl ResponseCache {
    /// Disk-backed when `dir` is given, otherwise memory only.
    pub fn new(dir: Option<PathBuf>) -> std::io::Result<Self> {
        if let Some(d) = &dir {
            std::fs::create_dir_all(d)?;
        }
        Ok(Self {
            dir,
            memory: RwLock::new(HashMap::new()),
            write_lock: Mutex::new(()),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn path_for(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.json")))
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let in_memory = self.memory.read().expect("cache lock").get(key).cloned();
        let found = in_memory.or_else(|| {
            let raw = std::fs::read_to_string(self.path_for(key)?).ok()?;
            self.memory.write().expect("cache lock").insert(key.to_string(), raw.clone());
            Some(raw)
        });
        match found {
            Some(_) => self.hits.fetch_add(1, Ordering::Relaxed),
            None => self.misses.fetch_add(1, Ordering::Relaxed),
        };
        found
    }

    pub fn put(&self, key: &str, raw: &str) -> std::io::Result<()> {
        let _guard = self.write_lock.lock().expect("cache write lock");
        if let (Some(dir), Some(path)) = (&self.dir, self.path_for(key)) {
            if !path.exists() {
                let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
                tmp.write_all(raw.as_bytes())?;
                tmp.persist(&path).map_err(|e| e.error)?;
            }
        }
        self.memory.write().expect("cache lock").insert(key.to_string(), raw.to_string());
        Ok(())
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_entries_survive_a_new_instance() {
        let dir = tempfile::tempdir().unwrap();
        let a = ResponseCache::new(Some(dir.path().to_path_buf())).unwrap();
        assert!(a.get("k").is_none());
        a.put("k", "{\"x\":1}").unwrap();
        assert!(dir.path().join("k.json").exists());
        let b = ResponseCache::new(Some(dir.path().to_path_buf())).unwrap();
        assert_eq!(b.get("k").as_deref(), Some("{\"x\":1}"));
        assert_eq!((b.hits(), a.misses()), (1, 1));
    }
}
