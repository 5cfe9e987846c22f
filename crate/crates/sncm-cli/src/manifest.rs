//! Reproducible run manifests and atomic file output. A manifest records the
//! effective configuration, the seed, crate versions, and a content hash for
//! every file the command wrote — nothing time-dependent, so identical runs
//! produce identical manifests.

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Write `bytes` to `path` atomically: temp file in the same directory, then
/// rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".to_string())
    ));
    std::fs::write(&tmp, bytes)
        .with_context(|| format!("cannot write {}", tmp.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("cannot move {} into place", path.display()))?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Collects output files for one command run and emits `manifest.json`.
pub struct ManifestBuilder {
    dir: PathBuf,
    command: String,
    seed: u64,
    config: toml::Value,
    files: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    seed: u64,
    versions: BTreeMap<&'static str, &'static str>,
    config: &'a toml::Value,
    files: &'a BTreeMap<String, String>,
}

impl ManifestBuilder {
    pub fn new(dir: &Path, command: &str, seed: u64, config: impl Serialize) -> Result<Self> {
        let config = toml::Value::try_from(config).context("cannot serialize config snapshot")?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            seed,
            config,
            files: BTreeMap::new(),
        })
    }

    /// Write one output file atomically and record its hash.
    pub fn write_file(&mut self, relative: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(relative);
        write_atomic(&path, bytes)?;
        self.files.insert(relative.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        let mut versions = BTreeMap::new();
        versions.insert("sncm", sncm_version());
        versions.insert("sncm-cli", env!("CARGO_PKG_VERSION"));
        let manifest = Manifest {
            command: &self.command,
            seed: self.seed,
            versions,
            config: &self.config,
            files: &self.files,
        };
        let json = serde_json::to_vec_pretty(&manifest)?;
        write_atomic(&self.dir.join("manifest.json"), &json)?;
        Ok(())
    }
}

fn sncm_version() -> &'static str {
    // the library crate is version-locked to the workspace
    env!("CARGO_PKG_VERSION")
}
