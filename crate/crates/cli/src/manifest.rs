//! Run directory inventory: every output file with its SHA-256.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub command: String,
    pub wall_seconds: f64,
    pub finished_unix: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: Value,
    /// SHA-256 of the canonical config JSON.
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub files: Vec<FileEntry>,
    pub commands: Vec<CommandRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn collect(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect(&p, out)?;
        } else if p.file_name().is_some_and(|n| n != MANIFEST) {
            out.push(p);
        }
    }
    Ok(())
}

impl RunManifest {
    pub fn new(config: Value, seed: Option<u64>) -> Self {
        let canonical = serde_json::to_vec(&config).unwrap_or_default();
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: sha256_hex(&canonical),
            config,
            seed,
            files: Vec::new(),
            commands: Vec::new(),
        }
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(dir.join(MANIFEST))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", dir.join(MANIFEST).display())))
    }

    /// Re-hashes every file under `dir`, appends the command record and
    /// writes the manifest.
    pub fn record(&mut self, dir: &Path, command: &str, wall_seconds: f64) -> Result<(), CliError> {
        let mut paths = Vec::new();
        collect(dir, &mut paths)?;
        paths.sort();
        self.files = paths
            .iter()
            .map(|p| {
                let bytes = fs::read(p)?;
                Ok(FileEntry {
                    path: p.strip_prefix(dir).unwrap_or(p).to_string_lossy().replace('\\', "/"),
                    bytes: bytes.len() as u64,
                    sha256: sha256_hex(&bytes),
                })
            })
            .collect::<Result<_, CliError>>()?;
        self.commands.push(CommandRecord {
            command: command.into(),
            wall_seconds,
            finished_unix: unix_now(),
        });
        fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
