//! Content-addressed on-disk response cache.
//!
//! One JSON file per cache key under `<dir>/<first two hex chars>/`.
//! Writes go through a temp file and rename, so concurrent writers of
//! the same key are safe (last rename wins with identical content).

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;

/// Environment variable overriding the cache directory location.
pub const CACHE_DIR_ENV: &str = "VPANEL_CACHE_DIR";

#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    /// Open a cache at `dir`, honoring the `VPANEL_CACHE_DIR` override.
    pub fn open(dir: &Path) -> Result<Self> {
        let dir = match std::env::var_os(CACHE_DIR_ENV) {
            Some(over) if !over.is_empty() => PathBuf::from(over),
            _ => dir.to_path_buf(),
        };
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    fn path_for(&self, key: &str) -> PathBuf {
        let shard = &key[..2.min(key.len())];
        self.dir.join(shard).join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<Vec<String>> {
        let path = self.path_for(key);
        let bytes = fs::read(path).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    pub fn put(&self, key: &str, responses: &[String]) -> Result<()> {
        let path = self.path_for(key);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
        fs::write(&tmp, serde_json::to_vec(responses)?)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }
}
