//! Per-command manifests naming every input and output by content hash.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use screentree::archive::file_hash;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    /// Effective configuration of the command.
    pub config: serde_json::Value,
    /// Input path to sha256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    /// Output path (relative to the output directory) to sha256.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config,
            ..Default::default()
        }
    }

    pub fn input(&mut self, path: &Path) -> std::io::Result<String> {
        let h = file_hash(path)?;
        self.inputs.insert(path.display().to_string(), h.clone());
        Ok(h)
    }

    pub fn output(&mut self, out_dir: &Path, path: &Path) -> std::io::Result<()> {
        let h = file_hash(path)?;
        let rel = path.strip_prefix(out_dir).unwrap_or(path);
        self.outputs.insert(rel.display().to_string(), h);
        Ok(())
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

pub fn manifest_path(dir: &Path, command: &str) -> PathBuf {
    dir.join(format!("{command}-manifest.json"))
}
