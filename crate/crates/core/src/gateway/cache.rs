use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::GatewayError;

/// One cached response, stored as `<dir>/<key[..2]>/<key>.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub request_digest: String,
    pub response_text: String,
    /// Seconds since the Unix epoch at write time.
    pub timestamp: u64,
}

/// Content-addressed directory of responses. No eviction.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ResponseCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        let shard = key.get(..2).unwrap_or("xx");
        self.dir.join(shard).join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<CacheEntry>, GatewayError> {
        let path = self.path_for(key);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(None),
            Err(source) => {
                return Err(GatewayError::Cache {
                    path: path.display().to_string(),
                    source,
                })
            }
        };
        match serde_json::from_str::<CacheEntry>(&text) {
            Ok(entry) if entry.request_digest == key => Ok(Some(entry)),
            _ => {
                log::warn!("ignoring corrupt cache entry {}", path.display());
                Ok(None)
            }
        }
    }

    /// Writes through a temporary file and a rename so concurrent readers
    /// never observe a partial entry.
    pub fn put(&self, key: &str, response_text: &str) -> Result<(), GatewayError> {
        let path = self.path_for(key);
        let io_err = |source| GatewayError::Cache {
            path: path.display().to_string(),
            source,
        };
        let parent = path.parent().expect("cache path has a parent");
        fs::create_dir_all(parent).map_err(io_err)?;
        let entry = CacheEntry {
            request_digest: key.to_string(),
            response_text: response_text.to_string(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let body = serde_json::to_string_pretty(&entry).expect("cache entry serializes");
        let tmp = parent.join(format!(
            ".{key}.{}.{:?}.tmp",
            std::process::id(),
            std::thread::current().id()
        ));
        fs::write(&tmp, body).map_err(io_err)?;
        fs::rename(&tmp, &path).map_err(io_err)
    }
}
