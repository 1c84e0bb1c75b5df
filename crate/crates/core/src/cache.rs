//! Content-addressed JSON cache for expensive tables.
//!
//! An entry is stored under `<dir>/<kind>-<sha256>.json`, where the hash is
//! taken over the kind and the canonical JSON of the key. The file records the
//! key next to the value, so a hash collision or a stale file is detected on
//! load and treated as a miss. Unreadable or corrupt files are recomputed with
//! a warning on stderr.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Environment variable overriding the cache directory.
pub const CACHE_DIR_ENV: &str = "WAVEKIN_CACHE_DIR";

#[derive(Serialize, Deserialize)]
struct Entry<K, V> {
    kind: String,
    key: K,
    value: V,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lookup {
    Hit,
    Miss,
    /// A file existed but was corrupt or keyed differently.
    Stale,
}

#[derive(Debug, Clone)]
pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    /// Uses the environment override when set, else `fallback`.
    pub fn from_env_or(fallback: impl Into<PathBuf>) -> Self {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(d) if !d.is_empty() => Self::new(PathBuf::from(d)),
            _ => Self::new(fallback),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn hash<K: Serialize>(kind: &str, key: &K) -> Result<String> {
        let body = serde_json::to_vec(key)?;
        let mut h = Sha256::new();
        h.update(kind.as_bytes());
        h.update([0u8]);
        h.update(&body);
        Ok(format!("{:x}", h.finalize()))
    }

    pub fn path_for<K: Serialize>(&self, kind: &str, key: &K) -> Result<PathBuf> {
        Ok(self.dir.join(format!("{kind}-{}.json", Self::hash(kind, key)?)))
    }

    /// Reads an entry. Never fails on bad content; only reports it.
    pub fn load<K, V>(&self, kind: &str, key: &K) -> Result<(Option<V>, Lookup)>
    where
        K: Serialize + DeserializeOwned + PartialEq,
        V: DeserializeOwned,
    {
        let path = self.path_for(kind, key)?;
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((None, Lookup::Miss)),
            Err(e) => {
                eprintln!("warning: cache file {} unreadable ({e}); recomputing", path.display());
                return Ok((None, Lookup::Stale));
            }
        };
        match serde_json::from_slice::<Entry<K, V>>(&bytes) {
            Ok(entry) if entry.kind == kind && entry.key == *key => Ok((Some(entry.value), Lookup::Hit)),
            Ok(_) => {
                eprintln!("warning: cache file {} is keyed differently; recomputing", path.display());
                Ok((None, Lookup::Stale))
            }
            Err(e) => {
                eprintln!("warning: cache file {} is corrupt ({e}); recomputing", path.display());
                Ok((None, Lookup::Stale))
            }
        }
    }

    /// Writes atomically through a temporary file and a rename.
    pub fn store<K, V>(&self, kind: &str, key: &K, value: &V) -> Result<PathBuf>
    where
        K: Serialize,
        V: Serialize,
    {
        fs::create_dir_all(&self.dir)?;
        let path = self.path_for(kind, key)?;
        let entry = Entry { kind: kind.to_string(), key, value };
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, serde_json::to_vec(&entry)?)?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }

    pub fn get_or_compute<K, V, F>(&self, kind: &str, key: &K, compute: F) -> Result<(V, Lookup)>
    where
        K: Serialize + DeserializeOwned + PartialEq,
        V: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<V>,
    {
        let (found, status) = self.load::<K, V>(kind, key)?;
        if let Some(v) = found {
            return Ok((v, status));
        }
        let v = compute()?;
        self.store(kind, key, &v)?;
        Ok((v, status))
    }
}
