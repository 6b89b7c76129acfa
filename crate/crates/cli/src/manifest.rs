use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const ARTIFACT: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written next to every command's outputs. It carries no
/// timestamps so reruns reproduce it byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub artifact: String,
    pub version: String,
    pub config_sha256: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// Command-specific details such as grid sizes or failure counts.
    pub details: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path, label: String) -> CliResult<FileDigest> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(FileDigest {
        path: label,
        sha256: sha256_hex(&bytes),
    })
}

impl Manifest {
    pub fn new(command: &str, canonical_config: &str, details: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            artifact: ARTIFACT.to_string(),
            version: VERSION.to_string(),
            config_sha256: sha256_hex(canonical_config.as_bytes()),
            inputs: Vec::new(),
            outputs: Vec::new(),
            details,
        }
    }

    /// Inputs are listed by file name only, so moving a dataset keeps the manifest stable.
    pub fn add_inputs<'a>(&mut self, paths: impl IntoIterator<Item = &'a PathBuf>) -> CliResult<()> {
        for p in paths {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            self.inputs.push(file_digest(p, name)?);
        }
        Ok(())
    }

    /// Hashes every regular file in `dir` except the manifest, sorted by name.
    pub fn add_outputs(&mut self, dir: &Path) -> CliResult<()> {
        let mut names = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
            let entry = entry.map_err(|e| CliError::io(dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name != MANIFEST_FILE && entry.path().is_file() {
                names.push(name);
            }
        }
        names.sort();
        for name in names {
            self.outputs.push(file_digest(&dir.join(&name), name)?);
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";
