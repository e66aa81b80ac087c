//! Per-run output directories `<out>/<command>-<hash12>` with a manifest.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_hash: &'a str,
    version: &'static str,
    config: &'a ExperimentConfig,
    inputs: &'a [FileEntry],
    outputs: &'a [FileEntry],
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug)]
pub struct RunDir {
    path: PathBuf,
    command: String,
    hash: String,
    config: ExperimentConfig,
    inputs: Vec<FileEntry>,
    outputs: Vec<FileEntry>,
}

impl RunDir {
    /// `extra` enters the hash alongside the config, e.g. input checksums.
    pub fn create(config: &ExperimentConfig, command: &str, extra: &[&str]) -> Result<Self> {
        let hash = config.run_hash(command, extra);
        let path = config.out.join(format!("{command}-{hash}"));
        std::fs::create_dir_all(&path).map_err(|e| CliError::io(&path, e))?;
        Ok(Self {
            path,
            command: command.to_string(),
            hash,
            config: config.clone(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let sha256 = file_sha256(path)?;
        self.inputs.push(FileEntry { path: path.display().to_string(), sha256 });
        Ok(())
    }

    /// Writes `contents` to `name` (relative, subdirectories allowed).
    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let target = self.path.join(name);
        if let Some(parent) = target.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        std::fs::write(&target, contents).map_err(|e| CliError::io(&target, e))?;
        self.outputs.push(FileEntry { path: name.to_string(), sha256: hex::encode(Sha256::digest(contents.as_bytes())) });
        Ok(target)
    }

    pub fn finish(self) -> Result<PathBuf> {
        let manifest = Manifest {
            command: &self.command,
            config_hash: &self.hash,
            version: env!("CARGO_PKG_VERSION"),
            config: &self.config,
            inputs: &self.inputs,
            outputs: &self.outputs,
        };
        let target = self.path.join(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(&target, text).map_err(|e| CliError::io(&target, e))?;
        Ok(self.path)
    }
}
