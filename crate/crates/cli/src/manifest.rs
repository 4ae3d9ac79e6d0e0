//! Run manifest and atomic artifact writes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sdiff::dataio::{bytes_hash, hash_hex};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub data: Option<DataRecord>,
    /// Keyed by subcommand.
    pub stages: BTreeMap<String, StageRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataRecord {
    pub path: String,
    /// Content hash of the parsed interaction matrix.
    pub content_hash: String,
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Effective settings in config-file form.
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    /// Input name to hash.
    pub inputs: BTreeMap<String, String>,
    /// Output file name to SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub started_unix: Option<u64>,
    pub finished_unix: Option<u64>,
}

pub fn now_unix(enabled: bool) -> Option<u64> {
    enabled.then(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hash_hex(&bytes_hash(bytes))
}

impl Manifest {
    pub fn new() -> Self {
        Self {
            version: MANIFEST_VERSION,
            ..Self::default()
        }
    }

    pub fn load(dir: &Path) -> CliResult<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Err(CliError::Usage(format!(
                "{} not found; run `sdiff prepare` first",
                path.display()
            )));
        }
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|source| CliError::Manifest { path, source })?;
        if m.version != MANIFEST_VERSION {
            return Err(CliError::Usage(format!("unsupported manifest version {}", m.version)));
        }
        Ok(m)
    }

    pub fn stage(&self, name: &str) -> CliResult<&StageRecord> {
        self.stages
            .get(name)
            .ok_or_else(|| CliError::Usage(format!("manifest has no `{name}` stage; run `sdiff {name}` first")))
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s.into_bytes()
    }
}

/// Reads `dir/name` and checks it against the hash an earlier stage recorded.
pub fn read_verified(dir: &Path, name: &str, stage: &StageRecord) -> CliResult<Vec<u8>> {
    let path = dir.join(name);
    let bytes = std::fs::read(&path).map_err(io_err(&path))?;
    if let Some(expected) = stage.outputs.get(name) {
        let found = sha256_hex(&bytes);
        if &found != expected {
            return Err(sdiff::Error::HashMismatch {
                expected: expected.clone(),
                found: format!("{found} ({})", path.display()),
            }
            .into());
        }
    }
    Ok(bytes)
}

/// Output files held in memory until every computation has succeeded.
#[derive(Debug, Default)]
pub struct Staged {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Staged {
    pub fn add(&mut self, path: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((path.into(), bytes));
    }

    /// Hashes keyed by file name.
    pub fn hashes(&self) -> BTreeMap<String, String> {
        self.files
            .iter()
            .map(|(p, b)| (file_name(p), sha256_hex(b)))
            .collect()
    }

    /// Writes every file through a temporary sibling and a rename. On failure,
    /// files written by this call are removed.
    pub fn commit(self) -> CliResult<()> {
        let mut written: Vec<PathBuf> = Vec::new();
        let result = (|| {
            for (path, bytes) in &self.files {
                if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                    std::fs::create_dir_all(parent).map_err(io_err(parent))?;
                }
                let tmp = path.with_file_name(format!(".{}.partial", file_name(path)));
                written.push(tmp.clone());
                std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
                std::fs::rename(&tmp, path).map_err(io_err(path))?;
                written.pop();
                written.push(path.clone());
            }
            Ok(())
        })();
        if result.is_err() {
            for p in &written {
                let _ = std::fs::remove_file(p);
            }
        }
        result
    }
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}
