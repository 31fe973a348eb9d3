use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::digest::{file_digest, sha256_hex};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// One line of `manifest.jsonl`: an artifact and what it was made from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub command: String,
    pub artifact: String,
    pub digest: String,
    /// Input artifact name to its digest at the time of the run.
    pub inputs: BTreeMap<String, String>,
    pub config_digest: String,
    pub seed: u64,
    pub wall_seconds: f64,
}

/// A run directory: artifacts plus an append-only manifest.
#[derive(Clone, Debug)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn entries(&self) -> Result<Vec<ManifestEntry>> {
        let path = self.path(MANIFEST_FILE);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(&path, e)),
        };
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| {
                serde_json::from_str(l).map_err(|e| Error::Format {
                    path: path.clone(),
                    reason: format!("line {}: {e}", n + 1),
                })
            })
            .collect()
    }

    /// Most recent manifest entry for `artifact`.
    pub fn latest(&self, artifact: &str) -> Result<Option<ManifestEntry>> {
        Ok(self.entries()?.into_iter().rev().find(|e| e.artifact == artifact))
    }

    /// Check that `name` exists, matches its manifest digest, and that every
    /// input it was built from still matches too. Returns the current digest.
    pub fn verify_input(&self, name: &str, producer: &'static str) -> Result<String> {
        let path = self.path(name);
        if !path.exists() {
            return Err(Error::MissingArtifact { path, producer });
        }
        let actual = file_digest(&path)?;
        let entries = self.entries()?;
        let latest = |artifact: &str| entries.iter().rev().find(|e| e.artifact == artifact);
        if let Some(entry) = latest(name) {
            if entry.digest != actual {
                return Err(Error::DigestMismatch {
                    path,
                    expected: entry.digest.clone(),
                    actual,
                });
            }
            for (input, recorded) in &entry.inputs {
                if let Some(upstream) = latest(input) {
                    if &upstream.digest != recorded {
                        // `name` was built from an older version of `input`.
                        return Err(Error::DigestMismatch {
                            path: self.path(input),
                            expected: recorded.clone(),
                            actual: upstream.digest.clone(),
                        });
                    }
                }
            }
        }
        Ok(actual)
    }

    /// Write `bytes` atomically and return their digest.
    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<String> {
        let path = self.path(name);
        let tmp = self.path(&format!(".{name}.tmp"));
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(sha256_hex(bytes))
    }

    pub fn append(&self, entry: &ManifestEntry) -> Result<()> {
        let path = self.path(MANIFEST_FILE);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let line = serde_json::to_string(entry)? + "\n";
        f.write_all(line.as_bytes()).map_err(|e| Error::io(&path, e))
    }
}
