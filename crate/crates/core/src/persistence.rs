//! Run directories: payload files written atomically, plus a manifest with
//! SHA-256 digests written last.
//!
//! A directory without `manifest.json` is an incomplete run. Timestamps come
//! from `SOURCE_DATE_EPOCH` when it is set, so manifests can be reproduced
//! byte for byte.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.json";
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    /// SHA-256 of `config.json` as stored.
    pub config_hash: String,
    pub seed: u64,
    pub started_utc: String,
    pub finished_utc: String,
    pub data_digest: Option<String>,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn now() -> DateTime<Utc> {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| DateTime::from_timestamp(secs, 0))
        .unwrap_or_else(Utc::now)
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || name == MANIFEST || name.contains(['/', '\\']) || name.starts_with('.') {
        return Err(Error::Parameter(format!("invalid payload name `{name}`")));
    }
    Ok(())
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    let result = (|| -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, dir.join(name))
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// Writer for one run directory. Dropping it without [`RunWriter::finish`]
/// leaves the directory without a manifest.
#[derive(Debug)]
pub struct RunWriter {
    dir: PathBuf,
    manifest: RunManifest,
}

impl RunWriter {
    /// Create `{root}/{UTC timestamp}-{config hash prefix}`, adding a numeric
    /// suffix on collision, and store the configuration.
    pub fn create(root: &Path, command: &str, config_json: &[u8], seed: u64) -> Result<Self> {
        fs::create_dir_all(root)?;
        let started = now();
        let hash = sha256_hex(config_json);
        let base = format!("{}-{}", started.format("%Y%m%dT%H%M%SZ"), &hash[..8]);
        let mut dir = root.join(&base);
        let mut suffix = 0;
        loop {
            match fs::create_dir(&dir) {
                Ok(()) => break,
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    suffix += 1;
                    dir = root.join(format!("{base}-{suffix}"));
                }
                Err(e) => return Err(e.into()),
            }
        }
        let mut w = Self {
            dir,
            manifest: RunManifest {
                version: ARTIFACT_VERSION.into(),
                command: command.into(),
                config_hash: hash,
                seed,
                started_utc: started.to_rfc3339(),
                finished_utc: String::new(),
                data_digest: None,
                files: Vec::new(),
            },
        };
        w.add(CONFIG, config_json)?;
        Ok(w)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Write one payload file atomically and record its digest.
    pub fn add(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        check_name(name)?;
        if self.manifest.files.iter().any(|f| f.name == name) {
            return Err(Error::Parameter(format!("payload `{name}` written twice")));
        }
        write_atomic(&self.dir, name, bytes)?;
        self.manifest.files.push(FileEntry {
            name: name.into(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    /// As [`RunWriter::add`], also recording the digest as the input data digest.
    pub fn add_data(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        self.add(name, bytes)?;
        self.manifest.data_digest = Some(sha256_hex(bytes));
        Ok(())
    }

    /// Write the manifest; the run is complete afterwards.
    pub fn finish(mut self) -> Result<PathBuf> {
        self.manifest.finished_utc = now().to_rfc3339();
        let json = serde_json::to_vec_pretty(&self.manifest)?;
        write_atomic(&self.dir, MANIFEST, &json)?;
        Ok(self.dir)
    }
}

/// A verified run directory.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

impl LoadedRun {
    pub fn read(&self, name: &str) -> Result<Vec<u8>> {
        let entry = self
            .manifest
            .files
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| Error::Parameter(format!("run has no payload `{name}`")))?;
        let bytes = fs::read(self.dir.join(name))?;
        let found = sha256_hex(&bytes);
        if found != entry.sha256 {
            return Err(Error::Corruption { name: name.into(), expected: entry.sha256.clone(), found });
        }
        Ok(bytes)
    }

    pub fn read_string(&self, name: &str) -> Result<String> {
        String::from_utf8(self.read(name)?).map_err(|e| Error::Parameter(format!("payload `{name}` is not UTF-8: {e}")))
    }
}

pub fn is_complete(dir: &Path) -> bool {
    dir.join(MANIFEST).is_file()
}

/// Open a run and verify every payload digest and the config hash.
pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let manifest_path = dir.join(MANIFEST);
    if !manifest_path.is_file() {
        return Err(Error::NotARun(dir.display().to_string()));
    }
    let manifest: RunManifest = serde_json::from_slice(&fs::read(&manifest_path)?)?;
    let run = LoadedRun { dir: dir.to_path_buf(), manifest };
    for f in &run.manifest.files {
        run.read(&f.name)?;
    }
    let config = fs::read(dir.join(CONFIG))?;
    let found = sha256_hex(&config);
    if found != run.manifest.config_hash {
        return Err(Error::Corruption {
            name: CONFIG.into(),
            expected: run.manifest.config_hash.clone(),
            found,
        });
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn names_are_checked() {
        for bad in ["", "manifest.json", "a/b", ".hidden"] {
            assert!(check_name(bad).is_err());
        }
        assert!(check_name("draws.jsonl").is_ok());
    }
}
