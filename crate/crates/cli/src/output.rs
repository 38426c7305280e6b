//! Output directory with content digests and the run manifest.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn now_rfc3339() -> String {
    OffsetDateTime::now_utc().format(&Rfc3339).unwrap_or_else(|_| "unknown".into())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects output files; every write is recorded with its digest.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: BTreeMap<String, String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutputDir { root: root.to_path_buf(), files: BTreeMap::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &BTreeMap<String, String> {
        &self.files
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        if name == MANIFEST_NAME || self.files.contains_key(name) {
            bail!("output file {name} written twice");
        }
        let path = self.root.join(name);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &serde_json::Value) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    pub fn write_jsonl(&mut self, name: &str, records: &[serde_json::Value]) -> Result<()> {
        let mut s = String::new();
        for r in records {
            s.push_str(&serde_json::to_string(r)?);
            s.push('\n');
        }
        self.write(name, s.as_bytes())
    }

    /// Writes `manifest.json` and returns it.
    pub fn finish(self, config: serde_json::Value, seed: u64, started: String) -> Result<RunManifest> {
        let m = RunManifest {
            config,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            started,
            finished: now_rfc3339(),
            files: self.files,
        };
        let mut s = serde_json::to_string_pretty(&m)?;
        s.push('\n');
        std::fs::write(self.root.join(MANIFEST_NAME), s)?;
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: serde_json::Value,
    pub code_version: String,
    pub seed: u64,
    pub started: String,
    pub finished: String,
    /// File name relative to the manifest → SHA-256 hex digest.
    pub files: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Names of files whose current digest differs from the stored one.
    pub fn verify(&self, dir: &Path) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for (name, digest) in &self.files {
            match std::fs::read(dir.join(name)) {
                Ok(bytes) if &sha256_hex(&bytes) == digest => {}
                _ => bad.push(name.clone()),
            }
        }
        Ok(bad)
    }
}
