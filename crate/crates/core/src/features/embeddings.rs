//! Binary embedding tables (`CEBE` format) and their JSON manifests.
//!
//! Layout, little-endian: magic `CEBE`, version `u32 = 1`, record count
//! `u64`, dim `u32`, then per record `[id_len u16][id utf-8][dim x f32]`.
//! The manifest's `sha256` covers the complete file.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CEBE";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 4;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    ids: Vec<String>,
    values: Vec<f32>,
    index: HashMap<String, usize>,
    pub provenance: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingManifest {
    pub provenance: String,
    pub dim: usize,
    pub count: usize,
    pub sha256: String,
    /// Extra exporter fields (model name, pooling, dataset revision).
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, provenance: impl Into<String>) -> Self {
        EmbeddingTable {
            dim,
            ids: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
            provenance: provenance.into(),
        }
    }

    pub fn push(&mut self, id: impl Into<String>, vector: &[f32]) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::contract(format!(
                "vector for `{id}` has dim {}, table dim is {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract(format!("vector for `{id}` has non-finite entries")));
        }
        if id.len() > u16::MAX as usize {
            return Err(Error::contract(format!("id `{id}` longer than 65535 bytes")));
        }
        if self.index.contains_key(&id) {
            return Err(Error::Integrity {
                message: "duplicate embedding id".into(),
                ids: vec![id],
            });
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.values.extend_from_slice(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index
            .get(id)
            .map(|i| &self.values[i * self.dim..(i + 1) * self.dim])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.values.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.ids.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for (i, id) in self.ids.iter().enumerate() {
            out.extend_from_slice(&(id.len() as u16).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for v in &self.values[i * self.dim..(i + 1) * self.dim] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], provenance: impl Into<String>) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: format!("bad magic {magic:?}"),
            });
        }
        let version = u32::from_le_bytes(cur.take(4, "version")?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format {
                offset: 4,
                message: format!("unsupported version {version}"),
            });
        }
        let count = u64::from_le_bytes(cur.take(8, "record count")?.try_into().unwrap());
        let dim = u32::from_le_bytes(cur.take(4, "dim")?.try_into().unwrap()) as usize;
        let mut table = EmbeddingTable::new(dim, provenance);
        let mut row = vec![0f32; dim];
        for r in 0..count {
            let record_start = cur.pos as u64;
            let id_len = u16::from_le_bytes(cur.take(2, "id length")?.try_into().unwrap()) as usize;
            let id_bytes = cur.take(id_len, "id")?;
            let id = std::str::from_utf8(id_bytes)
                .map_err(|e| Error::Format {
                    offset: record_start + 2,
                    message: format!("record {r} id is not utf-8: {e}"),
                })?
                .to_string();
            let payload = cur.take(dim * 4, "vector")?;
            for (dst, chunk) in row.iter_mut().zip(payload.chunks_exact(4)) {
                *dst = f32::from_le_bytes(chunk.try_into().unwrap());
            }
            if table.index.contains_key(&id) {
                return Err(Error::Integrity {
                    message: "duplicate embedding id".into(),
                    ids: vec![id],
                });
            }
            table.push(id, &row).map_err(|e| match e {
                Error::Contract(m) => Error::Format {
                    offset: record_start,
                    message: m,
                },
                other => other,
            })?;
        }
        if cur.pos != bytes.len() {
            return Err(Error::Format {
                offset: cur.pos as u64,
                message: format!(
                    "header declares {count} records but {} trailing bytes remain",
                    bytes.len() - cur.pos
                ),
            });
        }
        Ok(table)
    }

    pub fn manifest(&self) -> EmbeddingManifest {
        EmbeddingManifest {
            provenance: self.provenance.clone(),
            dim: self.dim,
            count: self.len(),
            sha256: hex::encode(Sha256::digest(self.to_bytes())),
            extra: Default::default(),
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: format!("truncated file while reading {what}"),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Writes the table and `PATH.manifest.json` next to it.
pub fn write_embedding_table(table: &EmbeddingTable, path: &Path) -> Result<EmbeddingManifest> {
    let bytes = table.to_bytes();
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    let manifest = table.manifest();
    let mpath = manifest_path(path);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))?;
    Ok(manifest)
}

/// Loads a table. When a manifest sits next to the file, its dim, count and
/// checksum must agree with the payload.
pub fn load_embedding_table(path: &Path) -> Result<EmbeddingTable> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mpath = manifest_path(path);
    let manifest: Option<EmbeddingManifest> = if mpath.exists() {
        let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        Some(serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            message: format!("manifest {}: {e}", mpath.display()),
        })?)
    } else {
        None
    };
    let provenance = manifest
        .as_ref()
        .map_or_else(|| "unknown".to_string(), |m| m.provenance.clone());
    let table = EmbeddingTable::from_bytes(&bytes, provenance)?;
    if let Some(m) = manifest {
        let digest = hex::encode(Sha256::digest(&bytes));
        if m.sha256 != digest || m.dim != table.dim() || m.count != table.len() {
            return Err(Error::Integrity {
                message: format!(
                    "manifest disagrees with payload (sha256 {} vs {digest}, dim {} vs {}, count {} vs {})",
                    m.sha256,
                    m.dim,
                    table.dim(),
                    m.count,
                    table.len()
                ),
                ids: vec![path.display().to_string()],
            });
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_four() -> EmbeddingTable {
        let mut t = EmbeddingTable::new(4, "test");
        t.push("a", &[1.0, -2.0, 0.5, 0.0]).unwrap();
        t.push("b", &[f32::MIN_POSITIVE, 3.25, -0.0, 7.0]).unwrap();
        t
    }

    #[test]
    fn header_and_records() {
        let t = EmbeddingTable::from_bytes(&two_by_four().to_bytes(), "x").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dim(), 4);
        assert_eq!(t.get("b").unwrap()[1], 3.25);
    }

    #[test]
    fn count_disagreement_is_error() {
        let mut bytes = two_by_four().to_bytes();
        bytes[8..16].copy_from_slice(&3u64.to_le_bytes());
        assert!(matches!(
            EmbeddingTable::from_bytes(&bytes, "x"),
            Err(Error::Format { .. })
        ));
        bytes[8..16].copy_from_slice(&1u64.to_le_bytes());
        assert!(matches!(
            EmbeddingTable::from_bytes(&bytes, "x"),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = two_by_four().to_bytes();
        let cut = &bytes[..bytes.len() - 3];
        match EmbeddingTable::from_bytes(cut, "x") {
            Err(Error::Format { offset, .. }) => assert!(offset > HEADER_LEN as u64),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = two_by_four().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(EmbeddingTable::from_bytes(&bytes, "x"), Err(Error::Format { offset: 0, .. })));
        let mut bytes = two_by_four().to_bytes();
        bytes[4] = 2;
        assert!(matches!(EmbeddingTable::from_bytes(&bytes, "x"), Err(Error::Format { offset: 4, .. })));
    }

    #[test]
    fn duplicate_id_is_integrity_error() {
        let mut t = EmbeddingTable::new(1, "x");
        t.push("a", &[1.0]).unwrap();
        let mut bytes = t.to_bytes();
        bytes[8..16].copy_from_slice(&2u64.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(b"a");
        bytes.extend_from_slice(&2f32.to_le_bytes());
        assert!(matches!(EmbeddingTable::from_bytes(&bytes, "x"), Err(Error::Integrity { .. })));
    }

    #[test]
    fn file_round_trip_with_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.bin");
        let t = two_by_four();
        let m = write_embedding_table(&t, &path).unwrap();
        let back = load_embedding_table(&path).unwrap();
        assert_eq!(back.to_bytes(), t.to_bytes());
        assert_eq!(m.count, 2);
        assert_eq!(back.provenance, "test");
        // corrupt one payload byte: checksum catches it
        let mut bytes = fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_embedding_table(&path), Err(Error::Integrity { .. })));
    }
}
