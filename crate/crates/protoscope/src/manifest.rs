//! Run manifests written next to every CLI artifact.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AppError, Result};

pub const FILE_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputFile {
    /// As given on the command line.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl InputFile {
    pub fn describe(path: &Path) -> Result<Self> {
        let data = fs::read(path).map_err(|e| AppError::io(path, e))?;
        Ok(Self {
            path: path.display().to_string(),
            bytes: data.len() as u64,
            sha256: format!("{:x}", Sha256::digest(&data)),
        })
    }
}

/// Everything needed to reproduce a run's artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub tag: String,
    pub seed: u64,
    pub inputs: Vec<InputFile>,
    pub parameters: BTreeMap<String, serde_json::Value>,
    /// Artifact file names relative to the run directory, sorted.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, tag: &str, seed: u64) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            tag: tag.to_string(),
            seed,
            inputs: Vec::new(),
            parameters: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(InputFile::describe(path)?);
        Ok(())
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) {
        self.parameters
            .insert(key.to_string(), serde_json::to_value(value).expect("parameters serialize"));
    }
}

/// A run's output directory, `<out>/<subcommand>/<tag>/`, recording the
/// files written into it.
pub struct RunDir {
    pub path: PathBuf,
    pub manifest: RunManifest,
}

impl RunDir {
    pub fn create(out: &Path, manifest: RunManifest) -> Result<Self> {
        let path = out.join(&manifest.subcommand).join(&manifest.tag);
        fs::create_dir_all(&path).map_err(|e| AppError::io(&path, e))?;
        Ok(Self { path, manifest })
    }

    /// Path for a new artifact, registered in the manifest.
    pub fn artifact(&mut self, name: &str) -> Result<PathBuf> {
        let path = self.path.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| AppError::io(parent, e))?;
        }
        self.manifest.outputs.push(name.to_string());
        Ok(path)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.artifact(name)?;
        fs::write(&path, text).map_err(|e| AppError::io(&path, e))?;
        Ok(path)
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.manifest.outputs.sort();
        self.manifest.outputs.dedup();
        let text = serde_json::to_string_pretty(&self.manifest)? + "\n";
        let path = self.path.join(FILE_NAME);
        fs::write(&path, text).map_err(|e| AppError::io(&path, e))?;
        Ok(self.path)
    }
}
