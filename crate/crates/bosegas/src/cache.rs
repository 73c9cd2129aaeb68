//! Content-addressed on-disk cache for weight tables.
//!
//! Each entry is a pair of files named after the SHA-256 of the canonical
//! JSON parameter record: `<hash>.f64le` holds raw little-endian doubles and
//! `<hash>.meta.json` holds the parameters, length, format version and a
//! checksum of the data file. Both are written to a temporary name and then
//! renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const ENV_VAR: &str = "BOSEGAS_CACHE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheMeta {
    pub format_version: u32,
    pub hash: String,
    pub params: serde_json::Value,
    pub len: usize,
    pub data_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EntryStatus {
    Ok,
    Stale,
    Corrupt(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntryReport {
    pub hash: String,
    pub status: EntryStatus,
}

/// SHA-256 of the canonical (key-sorted, compact) JSON encoding.
pub fn params_hash(params: &serde_json::Value) -> String {
    let canonical = serde_json::to_string(&canonical(params)).expect("json values always serialise");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

fn canonical(v: &serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            Value::Object(keys.into_iter().map(|k| (k.clone(), canonical(&map[k]))).collect())
        }
        Value::Array(items) => Value::Array(items.iter().map(canonical).collect()),
        other => other.clone(),
    }
}

fn encode(data: &[f64]) -> Vec<u8> {
    data.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn decode(bytes: &[u8]) -> Option<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return None;
    }
    Some(
        bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect(),
    )
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Cache {
    root: PathBuf,
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    /// Cache rooted at `$BOSEGAS_CACHE`, if set.
    pub fn from_env() -> Option<Self> {
        std::env::var_os(ENV_VAR).map(Self::new)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn data_path(&self, hash: &str) -> PathBuf {
        self.root.join(format!("{hash}.f64le"))
    }

    pub fn meta_path(&self, hash: &str) -> PathBuf {
        self.root.join(format!("{hash}.meta.json"))
    }

    /// Store `data` under the hash of `params`; returns the hash.
    pub fn store(&self, params: &serde_json::Value, data: &[f64]) -> Result<String> {
        fs::create_dir_all(&self.root)?;
        let hash = params_hash(params);
        let bytes = encode(data);
        let meta = CacheMeta {
            format_version: FORMAT_VERSION,
            hash: hash.clone(),
            params: params.clone(),
            len: data.len(),
            data_sha256: hex::encode(Sha256::digest(&bytes)),
        };
        write_atomic(&self.data_path(&hash), &bytes)?;
        write_atomic(&self.meta_path(&hash), serde_json::to_string_pretty(&meta)?.as_bytes())?;
        Ok(hash)
    }

    /// Load the entry for `params`. A missing entry is `Ok(None)`; an entry
    /// that fails verification is [`Error::CacheCorrupt`].
    pub fn load(&self, params: &serde_json::Value) -> Result<Option<Vec<f64>>> {
        let hash = params_hash(params);
        if !self.meta_path(&hash).exists() || !self.data_path(&hash).exists() {
            return Ok(None);
        }
        match self.check(&hash)? {
            (EntryStatus::Ok, Some(data)) => Ok(Some(data)),
            (EntryStatus::Stale, _) => Ok(None),
            (EntryStatus::Corrupt(why), _) => Err(Error::CacheCorrupt(format!("{hash}: {why}"))),
            (EntryStatus::Ok, None) => unreachable!("ok entries carry data"),
        }
    }

    fn check(&self, hash: &str) -> Result<(EntryStatus, Option<Vec<f64>>)> {
        let corrupt = |why: &str| Ok((EntryStatus::Corrupt(why.to_string()), None));
        let meta_text = match fs::read_to_string(self.meta_path(hash)) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return corrupt("missing metadata"),
            Err(e) => return Err(e.into()),
        };
        let meta: CacheMeta = match serde_json::from_str(&meta_text) {
            Ok(m) => m,
            Err(_) => return corrupt("unreadable metadata"),
        };
        if meta.format_version != FORMAT_VERSION {
            return Ok((EntryStatus::Stale, None));
        }
        if meta.hash != hash || params_hash(&meta.params) != hash {
            return corrupt("parameter hash mismatch");
        }
        let bytes = match fs::read(self.data_path(hash)) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return corrupt("missing data"),
            Err(e) => return Err(e.into()),
        };
        if hex::encode(Sha256::digest(&bytes)) != meta.data_sha256 {
            return corrupt("data checksum mismatch");
        }
        match decode(&bytes) {
            Some(d) if d.len() == meta.len => Ok((EntryStatus::Ok, Some(d))),
            _ => corrupt("length mismatch"),
        }
    }

    /// Hashes of all entries, sorted.
    pub fn list(&self) -> Result<Vec<String>> {
        if !self.root.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let name = entry?.file_name().to_string_lossy().into_owned();
            let stem = name.strip_suffix(".meta.json").or_else(|| name.strip_suffix(".f64le"));
            if let Some(h) = stem {
                out.push(h.to_string());
            }
        }
        out.sort();
        out.dedup();
        Ok(out)
    }

    /// Recompute every checksum.
    pub fn verify(&self) -> Result<Vec<EntryReport>> {
        self.list()?
            .into_iter()
            .map(|hash| {
                let (status, _) = self.check(&hash)?;
                Ok(EntryReport { hash, status })
            })
            .collect()
    }

    /// Remove entries written by other format versions; returns their hashes.
    pub fn purge(&self) -> Result<Vec<String>> {
        let mut removed = Vec::new();
        for report in self.verify()? {
            if report.status == EntryStatus::Stale {
                for p in [self.data_path(&report.hash), self.meta_path(&report.hash)] {
                    if p.exists() {
                        fs::remove_file(p)?;
                    }
                }
                removed.push(report.hash);
            }
        }
        Ok(removed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn hash_ignores_key_order() {
        let a: serde_json::Value = serde_json::from_str(r#"{"b":1,"a":2}"#).unwrap();
        let b: serde_json::Value = serde_json::from_str(r#"{"a":2,"b":1}"#).unwrap();
        assert_eq!(params_hash(&a), params_hash(&b));
        assert_eq!(params_hash(&a).len(), 64);
    }

    #[test]
    fn round_trip_and_listing() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path().join("c"));
        assert!(cache.list().unwrap().is_empty());
        let p = json!({"x": 1});
        let data = vec![1.0, f64::MIN_POSITIVE, -0.0, 1e300];
        let h = cache.store(&p, &data).unwrap();
        let back = cache.load(&p).unwrap().unwrap();
        assert_eq!(
            back.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            data.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(cache.list().unwrap(), vec![h]);
        assert!(cache.load(&json!({"x": 2})).unwrap().is_none());
    }

    #[test]
    fn stale_entries_are_purged() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path());
        let p = json!({"x": 1});
        let h = cache.store(&p, &[1.0]).unwrap();
        let mut meta: CacheMeta =
            serde_json::from_str(&fs::read_to_string(cache.meta_path(&h)).unwrap()).unwrap();
        meta.format_version = 0;
        fs::write(cache.meta_path(&h), serde_json::to_string(&meta).unwrap()).unwrap();
        assert!(cache.load(&p).unwrap().is_none());
        assert_eq!(cache.purge().unwrap(), vec![h]);
        assert!(cache.list().unwrap().is_empty());
    }
}
