use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::GatewayError;

/// One `(digest, response)` pair as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub digest: String,
    pub response: String,
}

/// Digest-keyed response store backed by a JSON array file.
///
/// Used both as a replay/record fixture and as the response cache. Writes
/// go through a mutex and rewrite the file via a temporary sibling, so a
/// crash leaves either the old or the new content on disk.
#[derive(Debug)]
pub struct ResponseStore {
    path: PathBuf,
    inner: Mutex<Inner>,
}

#[derive(Debug, Default)]
struct Inner {
    entries: Vec<FixtureEntry>,
    index: HashMap<String, usize>,
}

impl ResponseStore {
    pub fn open_existing(path: &Path) -> Result<Self, GatewayError> {
        if !path.exists() {
            return Err(GatewayError::FixtureNotFound(path.display().to_string()));
        }
        Self::load(path)
    }

    pub fn open_or_create(path: &Path) -> Result<Self, GatewayError> {
        if path.exists() {
            Self::load(path)
        } else {
            Ok(ResponseStore {
                path: path.to_path_buf(),
                inner: Mutex::new(Inner::default()),
            })
        }
    }

    pub fn from_entries(path: &Path, entries: Vec<FixtureEntry>) -> Self {
        let mut inner = Inner::default();
        for e in entries {
            inner.upsert(e);
        }
        ResponseStore {
            path: path.to_path_buf(),
            inner: Mutex::new(inner),
        }
    }

    fn load(path: &Path) -> Result<Self, GatewayError> {
        let corrupt = |detail: String| GatewayError::FixtureCorrupt {
            path: path.display().to_string(),
            detail,
        };
        let raw = fs::read_to_string(path).map_err(|e| corrupt(e.to_string()))?;
        let entries: Vec<FixtureEntry> = serde_json::from_str(&raw).map_err(|e| corrupt(e.to_string()))?;
        Ok(Self::from_entries(path, entries))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("store lock").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, digest: &str) -> Option<String> {
        let inner = self.inner.lock().expect("store lock");
        inner.index.get(digest).map(|&i| inner.entries[i].response.clone())
    }

    pub fn entries(&self) -> Vec<FixtureEntry> {
        self.inner.lock().expect("store lock").entries.clone()
    }

    /// Adds or replaces an entry and persists the whole store.
    pub fn insert(&self, digest: &str, response: &str) -> Result<(), GatewayError> {
        let mut inner = self.inner.lock().expect("store lock");
        inner.upsert(FixtureEntry {
            digest: digest.to_string(),
            response: response.to_string(),
        });
        write_entries(&self.path, &inner.entries)
    }

    pub fn save(&self) -> Result<(), GatewayError> {
        let inner = self.inner.lock().expect("store lock");
        write_entries(&self.path, &inner.entries)
    }
}

impl Inner {
    fn upsert(&mut self, entry: FixtureEntry) {
        match self.index.get(&entry.digest) {
            Some(&i) => self.entries[i] = entry,
            None => {
                self.index.insert(entry.digest.clone(), self.entries.len());
                self.entries.push(entry);
            }
        }
    }
}

fn write_entries(path: &Path, entries: &[FixtureEntry]) -> Result<(), GatewayError> {
    let persist = |e: String| GatewayError::Persist {
        path: path.display().to_string(),
        detail: e,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| persist(e.to_string()))?;
    }
    let mut json = serde_json::to_string_pretty(entries).map_err(|e| persist(e.to_string()))?;
    json.push('\n');
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, json).map_err(|e| persist(e.to_string()))?;
    fs::rename(&tmp, path).map_err(|e| persist(e.to_string()))
}
