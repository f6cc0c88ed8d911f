use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::backend::Candidate;
use crate::error::{Error, Result};

/// File holding one JSON record per line inside the cache directory.
pub const CACHE_FILE: &str = "values.jsonl";

/// One cached model response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key: String,
    pub prompt: String,
    /// Request discriminator: the target token, `options:A|B|...` or
    /// `text:<max_tokens>`.
    pub target: String,
    /// First-token probability of `target`; `None` for option and text requests.
    pub probability: Option<f64>,
    pub raw_top_candidates: Vec<Candidate>,
    pub timestamp: u64,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

/// Digest identifying one request.
pub fn cache_key(model_id: &str, system_prompt: &str, prompt: &str, target: &str) -> String {
    let mut hasher = Sha256::new();
    for field in [model_id, system_prompt, prompt, target] {
        hasher.update((field.len() as u64).to_le_bytes());
        hasher.update(field.as_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Persistent map from request digest to response record.
///
/// Backed by an append-only JSONL file. Inserting a key that is already
/// present keeps the existing record, so concurrent writers converge on the
/// same contents.
pub struct ValueCache {
    path: Option<PathBuf>,
    state: Mutex<State>,
}

struct State {
    records: HashMap<String, CacheRecord>,
    file: Option<File>,
}

impl ValueCache {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            state: Mutex::new(State {
                records: HashMap::new(),
                file: None,
            }),
        }
    }

    /// Opens (creating if needed) the cache stored in `dir`.
    ///
    /// A torn final line from an interrupted write is ignored.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        let path = dir.join(CACHE_FILE);
        let mut records = HashMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|e| Error::file(&path, e))?;
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|e| Error::file(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                if let Ok(record) = serde_json::from_str::<CacheRecord>(&line) {
                    records.entry(record.key.clone()).or_insert(record);
                }
            }
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::file(&path, e))?;
        // Terminate a torn tail so the next record starts on its own line.
        if std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0) > 0 {
            let bytes = std::fs::read(&path).map_err(|e| Error::file(&path, e))?;
            if bytes.last() != Some(&b'\n') {
                file.write_all(b"\n").map_err(|e| Error::file(&path, e))?;
            }
        }
        Ok(Self {
            path: Some(path),
            state: Mutex::new(State {
                records,
                file: Some(file),
            }),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<CacheRecord> {
        self.state.lock().unwrap().records.get(key).cloned()
    }

    /// Stores `record` unless its key is present; returns the stored record.
    pub fn insert(&self, record: CacheRecord) -> Result<CacheRecord> {
        let mut state = self.state.lock().unwrap();
        if let Some(existing) = state.records.get(&record.key) {
            return Ok(existing.clone());
        }
        if let Some(file) = state.file.as_mut() {
            let mut line = serde_json::to_string(&record)?;
            line.push('\n');
            let path = self.path.as_deref().unwrap_or(Path::new(CACHE_FILE));
            file.write_all(line.as_bytes())
                .and_then(|()| file.flush())
                .map_err(|e| Error::file(path, e))?;
        }
        state.records.insert(record.key.clone(), record.clone());
        Ok(record)
    }

    pub fn len(&self) -> usize {
        self.state.lock().unwrap().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All records ordered by key.
    pub fn records(&self) -> Vec<CacheRecord> {
        let state = self.state.lock().unwrap();
        let mut out: Vec<_> = state.records.values().cloned().collect();
        out.sort_by(|a, b| a.key.cmp(&b.key));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(key: &str, p: f64) -> CacheRecord {
        CacheRecord {
            key: key.into(),
            prompt: "p".into(),
            target: "B".into(),
            probability: Some(p),
            raw_top_candidates: vec![Candidate {
                token: "B".into(),
                logprob: p.ln(),
            }],
            timestamp: 0,
            model_id: "m".into(),
            text: None,
        }
    }

    #[test]
    fn key_separates_fields() {
        let a = cache_key("m", "s", "ab", "c");
        let b = cache_key("m", "s", "a", "bc");
        assert_ne!(a, b);
        assert_eq!(a, cache_key("m", "s", "ab", "c"));
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn first_insert_wins() {
        let cache = ValueCache::in_memory();
        cache.insert(record("k", 0.5)).unwrap();
        let kept = cache.insert(record("k", 0.9)).unwrap();
        assert_eq!(kept.probability, Some(0.5));
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn persists_and_survives_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        {
            let cache = ValueCache::open(dir.path()).unwrap();
            cache.insert(record("a", 0.25)).unwrap();
            cache.insert(record("b", 0.75)).unwrap();
        }
        let path = dir.path().join(CACHE_FILE);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"key\":\"c\",\"pro").unwrap();
        drop(f);

        let cache = ValueCache::open(dir.path()).unwrap();
        assert_eq!(cache.len(), 2);
        assert_eq!(cache.get("b").unwrap().probability, Some(0.75));
        cache.insert(record("d", 0.5)).unwrap();
        drop(cache);
        let cache = ValueCache::open(dir.path()).unwrap();
        assert_eq!(cache.len(), 3);
    }
}
