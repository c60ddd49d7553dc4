//! JSON reports: a deterministic `body`, its SHA-256, and the wall clock
//! kept outside the hashed part.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use hanzawa_core::{CheckRecord, RunConfig};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Body<T> {
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub data: T,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report<T> {
    pub body: Body<T>,
    pub body_sha256: String,
    pub wall_clock_s: f64,
}

/// Records of a `verify` run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checks {
    pub records: Vec<CheckRecord>,
    pub passed: usize,
    pub failed: usize,
}

impl Checks {
    pub fn new(records: Vec<CheckRecord>) -> Self {
        let passed = records.iter().filter(|r| r.pass).count();
        let failed = records.len() - passed;
        Checks { records, passed, failed }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(cfg)?))
}

impl<T: Serialize> Report<T> {
    pub fn new(command: &str, cfg: &RunConfig, data: T, wall_clock_s: f64) -> Result<Self> {
        let body = Body {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash: config_hash(cfg)?,
            data,
        };
        let body_sha256 = canonical_hash(&serde_json::to_value(&body)?)?;
        Ok(Report { body, body_sha256, wall_clock_s })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        write_atomic(path, &bytes)
    }
}

/// Write through a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Hash of the compact serialization with sorted keys, so a parsed report
/// hashes the same as the one that was written.
pub fn canonical_hash(v: &serde_json::Value) -> Result<String> {
    Ok(sha256_hex(&serde_json::to_vec(v)?))
}

/// Recompute the body hash of a stored report.
pub fn hash_matches(v: &serde_json::Value) -> bool {
    match (v.get("body"), v.get("body_sha256").and_then(|h| h.as_str())) {
        (Some(body), Some(h)) => canonical_hash(body).is_ok_and(|c| c == h),
        _ => false,
    }
}
