//! Run manifests: configuration hash, seed and artifact checksums.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::{file_sha256, write_json, WriteReport};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    /// Input name (relative) to SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output file name to its write report.
    pub outputs: BTreeMap<String, WriteReport>,
}

impl Manifest {
    pub fn new(command: &str, config_hash: String, seed: u64) -> Self {
        Manifest {
            command: command.to_string(),
            config_hash,
            seed,
            ..Default::default()
        }
    }

    /// Records an input file under `name`.
    pub fn input(&mut self, name: impl Into<String>, path: &Path) -> Result<()> {
        self.inputs.insert(name.into(), file_sha256(path)?);
        Ok(())
    }

    pub fn output(&mut self, name: impl Into<String>, report: WriteReport) {
        self.outputs.insert(name.into(), report);
    }

    /// Writes the manifest atomically and returns its own checksum, which
    /// identifies the whole run.
    pub fn write(&self, path: &Path) -> Result<String> {
        Ok(write_json(self, path, "manifest")?.checksum)
    }
}
