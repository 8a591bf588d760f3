use std::collections::BTreeMap;
use std::path::Path;

use chrono::{SecondsFormat, Utc};
use edutree_core::util::sha256_hex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

pub const TOOL_VERSION: &str = concat!("edutree ", env!("CARGO_PKG_VERSION"));

/// Record of one command execution: parameters plus input and output hashes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub parameters: BTreeMap<String, Value>,
    /// Path → SHA-256 of the file content.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub started_at: String,
    pub finished_at: String,
    pub exit_code: u8,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<RunManifest>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn start(command: &str) -> Self {
        Self {
            command: command.into(),
            tool_version: TOOL_VERSION.into(),
            parameters: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            started_at: now(),
            finished_at: String::new(),
            exit_code: 0,
            stages: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.parameters
            .insert(key.into(), serde_json::to_value(value).expect("parameter serializes"));
        self
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self, CliError> {
        let h = hash_file(path)?;
        self.inputs.insert(path.display().to_string(), h);
        Ok(self)
    }

    pub fn output(&mut self, path: &Path) -> Result<&mut Self, CliError> {
        let h = hash_file(path)?;
        self.outputs.insert(path.display().to_string(), h);
        Ok(self)
    }

    pub fn finish(&mut self, exit_code: u8) {
        self.finished_at = now();
        self.exit_code = exit_code;
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        crate::io::write_json(path, self)
    }
}

pub fn hash_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}
