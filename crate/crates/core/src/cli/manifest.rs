//! Run provenance: every command writes a manifest describing its inputs,
//! resolved configuration, and the hash of every output file. Manifests
//! contain no wall-clock data, so identical runs produce identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub status: String,
    /// Resolved configuration after merging flags over the config file.
    pub config: Value,
    /// Where the data came from and its content hashes.
    pub dataset: Value,
    /// Output file name -> sha256 of its bytes.
    pub outputs: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: Value, dataset: Value) -> Self {
        RunManifest {
            command: command.to_string(),
            status: "ok".into(),
            config,
            dataset,
            outputs: BTreeMap::new(),
            error: None,
        }
    }

    /// Record a file that was just written under the run directory.
    pub fn record(&mut self, out_dir: &Path, file_name: &str) -> Result<()> {
        let path = out_dir.join(file_name);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        self.outputs.insert(file_name.to_string(), hex_sha256(&bytes));
        Ok(())
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let path = out_dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format { path: path.display().to_string(), detail: e.to_string() })?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex_sha256(&bytes))
}
