use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of a JSON-serializable key. Struct fields serialize in declaration
/// order, so equal keys give equal hashes.
pub fn key_hash<T: Serialize>(key: &T) -> Result<String> {
    let bytes = serde_json::to_vec(key).map_err(|e| Error::Config(format!("unhashable cache key: {e}")))?;
    Ok(sha256_hex(&bytes))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheStatus {
    Hit,
    Built,
    Rebuilt,
    Disabled,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    key: String,
    sha256: String,
}

/// Content-addressed store of binary artifacts. Each entry has a JSON
/// sidecar holding its key hash and payload checksum; an entry that fails
/// either check, or fails to decode, is rebuilt and a notice is recorded.
#[derive(Debug)]
pub struct ArtifactCache {
    dir: Option<PathBuf>,
    notices: Mutex<Vec<String>>,
}

impl ArtifactCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ArtifactCache {
            dir: Some(dir.into()),
            notices: Mutex::new(Vec::new()),
        }
    }

    pub fn disabled() -> Self {
        ArtifactCache {
            dir: None,
            notices: Mutex::new(Vec::new()),
        }
    }

    pub fn notices(&self) -> Vec<String> {
        self.notices.lock().expect("notice lock").clone()
    }

    fn notice(&self, msg: String) {
        self.notices.lock().expect("notice lock").push(msg);
    }

    pub fn entry_path(&self, name: &str, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{name}-{}.bin", &key[..16.min(key.len())])))
    }

    /// Returns the decoded artifact for `key`, building and storing it when
    /// absent or unusable.
    pub fn get_or_build<T>(
        &self,
        name: &str,
        key: &str,
        decode: impl Fn(&[u8]) -> Result<T>,
        build: impl FnOnce() -> Result<(T, Vec<u8>)>,
    ) -> Result<(T, CacheStatus)> {
        let Some(path) = self.entry_path(name, key) else {
            return build().map(|(v, _)| (v, CacheStatus::Disabled));
        };
        let side_path = path.with_extension("json");
        let mut stale = false;
        if path.exists() {
            match self.try_load(&path, &side_path, key, &decode) {
                Ok(v) => return Ok((v, CacheStatus::Hit)),
                Err(reason) => {
                    self.notice(format!("cache entry {} unusable ({reason}); rebuilding", path.display()));
                    stale = true;
                }
            }
        }
        let (value, bytes) = build()?;
        write_file(&path, &bytes)?;
        let side = Sidecar {
            key: key.to_string(),
            sha256: sha256_hex(&bytes),
        };
        write_file(&side_path, &serde_json::to_vec_pretty(&side).expect("sidecar serializes"))?;
        Ok((value, if stale { CacheStatus::Rebuilt } else { CacheStatus::Built }))
    }

    fn try_load<T>(
        &self,
        path: &Path,
        side_path: &Path,
        key: &str,
        decode: &impl Fn(&[u8]) -> Result<T>,
    ) -> std::result::Result<T, String> {
        let bytes = std::fs::read(path).map_err(|e| e.to_string())?;
        let side = std::fs::read(side_path).map_err(|e| format!("sidecar: {e}"))?;
        let side: Sidecar = serde_json::from_slice(&side).map_err(|e| format!("sidecar: {e}"))?;
        if side.key != key {
            return Err("key mismatch".into());
        }
        if side.sha256 != sha256_hex(&bytes) {
            return Err("checksum mismatch".into());
        }
        decode(&bytes).map_err(|e| e.to_string())
    }
}

/// Provenance record written next to every run's outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub corpus_hash: Option<String>,
    pub featurizer: Option<String>,
    /// Output-relative path to sha256 of every file the run wrote.
    pub artifacts: BTreeMap<String, String>,
    pub cache: BTreeMap<String, CacheStatus>,
    pub notices: Vec<String>,
    pub wall_time_seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            corpus_hash: None,
            featurizer: None,
            artifacts: BTreeMap::new(),
            cache: BTreeMap::new(),
            notices: Vec::new(),
            wall_time_seconds: 0.0,
        }
    }

    /// Writes `bytes` under `out` and records its checksum.
    pub fn write(&mut self, out: &Path, relative: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = out.join(relative);
        write_file(&path, bytes)?;
        self.artifacts.insert(relative.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    /// Records a file written elsewhere, by its path relative to `out`.
    pub fn record(&mut self, out: &Path, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let rel = path.strip_prefix(out).unwrap_or(path).to_string_lossy().replace('\\', "/");
        self.artifacts.insert(rel, sha256_hex(&bytes));
        Ok(())
    }

    pub fn save(&self, out: &Path) -> Result<PathBuf> {
        let path = out.join("manifest.json");
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_file(&path, text.as_bytes())?;
        Ok(path)
    }
}
