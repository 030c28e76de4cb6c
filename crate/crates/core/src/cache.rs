//! Response cache keyed by `sha256(model id, prompt)`.
//!
//! On disk each entry is one JSON file under a two-character shard directory,
//! written to a temporary name and renamed into place, so concurrent readers
//! never observe partial entries.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::digest_hex;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub model: String,
    pub prompt_hash: String,
    pub reply: String,
}

#[derive(Debug)]
enum Storage {
    Disk { dir: PathBuf, write_lock: Mutex<()> },
    Memory(RwLock<HashMap<String, CacheEntry>>),
}

#[derive(Debug)]
pub struct ResponseCache {
    storage: Storage,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

pub fn prompt_hash(prompt: &str) -> String {
    digest_hex(prompt.as_bytes())
}

/// Cache key for a `(model, prompt)` pair. `extra` distinguishes backends
/// whose replies depend on more than the prompt text.
pub fn cache_key(model_id: &str, prompt: &str, extra: &str) -> String {
    let mut material = Vec::with_capacity(model_id.len() + prompt.len() + extra.len() + 2);
    material.extend_from_slice(model_id.as_bytes());
    material.push(0);
    material.extend_from_slice(prompt.as_bytes());
    if !extra.is_empty() {
        material.push(0);
        material.extend_from_slice(extra.as_bytes());
    }
    digest_hex(&material)
}

impl ResponseCache {
    pub fn on_disk(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ResponseCache {
            storage: Storage::Disk {
                dir,
                write_lock: Mutex::new(()),
            },
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        })
    }

    pub fn in_memory() -> Self {
        ResponseCache {
            storage: Storage::Memory(RwLock::new(HashMap::new())),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    fn entry_path(dir: &Path, key: &str) -> PathBuf {
        dir.join(&key[..2]).join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        let found = match &self.storage {
            Storage::Disk { dir, .. } => fs::read(Self::entry_path(dir, key))
                .ok()
                .and_then(|bytes| serde_json::from_slice(&bytes).ok()),
            Storage::Memory(map) => map.read().expect("cache lock poisoned").get(key).cloned(),
        };
        let counter = if found.is_some() { &self.hits } else { &self.misses };
        counter.fetch_add(1, Ordering::Relaxed);
        found
    }

    pub fn put(&self, key: &str, entry: CacheEntry) -> io::Result<()> {
        match &self.storage {
            Storage::Disk { dir, write_lock } => {
                let path = Self::entry_path(dir, key);
                let _guard = write_lock.lock().expect("cache lock poisoned");
                if path.exists() {
                    return Ok(());
                }
                fs::create_dir_all(path.parent().expect("shard dir"))?;
                let tmp = path.with_extension("tmp");
                fs::write(&tmp, serde_json::to_vec(&entry)?)?;
                fs::rename(tmp, path)
            }
            Storage::Memory(map) => {
                map.write()
                    .expect("cache lock poisoned")
                    .entry(key.to_string())
                    .or_insert(entry);
                Ok(())
            }
        }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }
}
