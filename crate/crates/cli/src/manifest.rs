//! Run manifests: enough metadata to reproduce a run bit-exactly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use reprodist_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Arguments after the binary name, exactly as invoked.
    pub argv: Vec<String>,
    /// The fully resolved settings the run used (flags, config files and
    /// defaults merged).
    pub config: serde_json::Value,
    /// SHA-256 of every input file consumed.
    pub inputs: BTreeMap<PathBuf, String>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub created_utc: String,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, argv: &[String]) -> Self {
        let argv = argv.to_vec();
        Self {
            tool: "reprodist".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            argv,
            config: serde_json::Value::Null,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            seed,
            created_utc: chrono::Utc::now().to_rfc3339(),
        }
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        let digest = sha256_file(path)?;
        self.inputs.insert(path.to_path_buf(), digest);
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Write next to the primary output as `<output>.manifest.json`.
    pub fn write_beside(&self, primary_output: &Path) -> Result<PathBuf> {
        let mut name = primary_output.file_name().unwrap_or_default().to_owned();
        name.push(".manifest.json");
        let path = primary_output.with_file_name(name);
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
        std::fs::write(&path, json)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid manifest {}: {e}", path.display())))
    }

    /// Check the recorded inputs still have the same content.
    pub fn verify_inputs(&self) -> Result<()> {
        for (path, digest) in &self.inputs {
            let now = sha256_file(path)?;
            if &now != digest {
                return Err(Error::Config(format!(
                    "input {} changed since the manifest was written",
                    path.display()
                )));
            }
        }
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}
