//! Output directory handling: the single writer that records content hashes
//! for the manifest, and the parameter-keyed result cache.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST: &str = "manifest.json";
pub const CACHE_DIR: &str = "cache";
pub const PLOTS_DIR: &str = "plots";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub kind: String,
    /// Hash of the effective configuration.
    pub config_sha256: String,
    /// Relative path to content hash, for every output file.
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let p = dir.join(MANIFEST);
        let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        let p = dir.join(MANIFEST);
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
    }
}

/// Every file written goes through here so that its hash lands in the manifest.
pub struct Writer {
    dir: PathBuf,
    files: BTreeMap<String, String>,
}

impl Writer {
    /// Plots rendered from an earlier run no longer match fresh outputs, so
    /// they are removed.
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let plots = dir.join(PLOTS_DIR);
        if plots.is_dir() {
            fs::remove_dir_all(&plots).with_context(|| format!("removing stale {}", plots.display()))?;
        }
        Ok(Self { dir: dir.to_path_buf(), files: BTreeMap::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, rel: &str, content: &str) -> Result<()> {
        let p = self.dir.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&p, content).with_context(|| format!("writing {}", p.display()))?;
        self.files.insert(rel.to_string(), sha256_hex(content.as_bytes()));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, &text)
    }

    pub fn finish(self, kind: &str, config_json: &str) -> Result<Manifest> {
        let m = Manifest {
            tool: "abpole".into(),
            version: VERSION.into(),
            kind: kind.into(),
            config_sha256: sha256_hex(config_json.as_bytes()),
            files: self.files,
        };
        m.write(&self.dir)?;
        Ok(m)
    }
}

/// Results keyed by `(unit, parameters, version)`, stored as JSON under the output directory.
pub struct Cache {
    dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct Entry<K, V> {
    key: K,
    value: V,
}

impl Cache {
    pub fn new(output: &Path) -> Self {
        Self { dir: output.join(CACHE_DIR) }
    }

    fn path<K: Serialize>(&self, unit: &str, key: &K) -> Result<(PathBuf, serde_json::Value)> {
        let key = serde_json::json!({ "unit": unit, "version": VERSION, "params": key });
        let hash = sha256_hex(serde_json::to_string(&key)?.as_bytes());
        Ok((self.dir.join(format!("{unit}-{}.json", &hash[..16])), key))
    }

    /// Returns the cached value for `key`, computing and storing it on a miss.
    pub fn get_or<K, V, F>(&self, unit: &str, key: &K, compute: F) -> Result<V>
    where
        K: Serialize,
        V: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<V>,
    {
        let (p, full_key) = self.path(unit, key)?;
        if let Ok(text) = fs::read_to_string(&p) {
            if let Ok(e) = serde_json::from_str::<Entry<serde_json::Value, V>>(&text) {
                if e.key == full_key {
                    log::debug!("cache hit {}", p.display());
                    return Ok(e.value);
                }
            }
        }
        let value = compute()?;
        fs::create_dir_all(&self.dir)?;
        let text = serde_json::to_string(&Entry { key: &full_key, value: &value })?;
        fs::write(&p, text).with_context(|| format!("writing cache entry {}", p.display()))?;
        Ok(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn cache_hits_return_identical_values() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path());
        let calls = Cell::new(0);
        let f = || {
            calls.set(calls.get() + 1);
            Ok(vec![0.1f64, 1.0 / 3.0, std::f64::consts::PI * 1e-300])
        };
        let a: Vec<f64> = cache.get_or("unit", &(1, "x"), f).unwrap();
        let b: Vec<f64> = cache.get_or("unit", &(1, "x"), f).unwrap();
        let _: Vec<f64> = cache.get_or("unit", &(2, "x"), f).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        assert_eq!(calls.get(), 2);
    }

    #[test]
    fn writer_records_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = Writer::new(dir.path()).unwrap();
        w.write("a/b.csv", "x\n").unwrap();
        let m = w.finish("spectrum", "{}").unwrap();
        assert_eq!(m.files["a/b.csv"], sha256_hex(b"x\n"));
        assert_eq!(Manifest::read(dir.path()).unwrap(), m);
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
