//! Run manifests: the completion marker and reproducibility record.
//!
//! Every file-writing command records the checksum of each output and
//! writes `manifest.json` last, so a manifest exists iff the run finished.
//! Re-running with the same config and seed must reproduce every recorded
//! checksum; the manifest itself carries timestamps and wall time and is
//! the one output that legitimately differs between identical runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{:02x}", b));
    }
    out
}

#[derive(Debug, Serialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    pub rng_algorithm: String,
    pub config_path: String,
    pub config_sha256: String,
    pub seed: u64,
    pub created_utc: String,
    pub wall_time_s: f64,
    pub outputs: Vec<OutputRecord>,
}

pub struct ManifestWriter {
    out_dir: PathBuf,
    manifest: Manifest,
    started: Instant,
}

impl ManifestWriter {
    pub fn new(command: &str, out_dir: &Path, config_path: &Path, config_sha256: &str, seed: u64) -> Self {
        ManifestWriter {
            out_dir: out_dir.to_path_buf(),
            manifest: Manifest {
                command: command.to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                rng_algorithm: qfluid::RNG_ALGORITHM.to_string(),
                config_path: config_path.display().to_string(),
                config_sha256: config_sha256.to_string(),
                seed,
                created_utc: chrono::Utc::now().to_rfc3339(),
                wall_time_s: 0.0,
                outputs: Vec::new(),
            },
            started: Instant::now(),
        }
    }

    /// Write one output file and record its checksum.
    pub fn write_output(&mut self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        let path = self.out_dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)
                .with_context(|| format!("cannot create {}", parent.display()))?;
        }
        fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        self.manifest.outputs.push(OutputRecord {
            path: name.to_string(),
            sha256: sha256_hex(contents),
            bytes: contents.len() as u64,
        });
        Ok(path)
    }

    /// Finalize: write `manifest.json`. Call only after every output
    /// succeeded.
    pub fn finish(mut self) -> Result<PathBuf> {
        self.manifest.wall_time_s = self.started.elapsed().as_secs_f64();
        let path = self.out_dir.join("manifest.json");
        let body = serde_json::to_string_pretty(&self.manifest).context("serialize manifest")?;
        fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}
