use std::path::Path;

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::eval::report::SCHEMA_VERSION;
use crate::nn::store::MODEL_FORMAT_VERSION;
use crate::util::{file_digest, write_atomic};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of(path: &Path) -> Result<Self> {
        Ok(InputDigest {
            path: path.display().to_string(),
            sha256: file_digest(path)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Versions {
    pub tool: String,
    pub report_schema: u32,
    pub model_format: u32,
}

impl Default for Versions {
    fn default() -> Self {
        Versions {
            tool: env!("CARGO_PKG_VERSION").to_string(),
            report_schema: SCHEMA_VERSION,
            model_format: MODEL_FORMAT_VERSION,
        }
    }
}

/// Provenance record written next to each command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub workers: usize,
    pub versions: Versions,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub failures: Vec<String>,
    pub created_at: String,
}

impl RunManifest {
    pub fn new(command: &str, config_hash: &str, seed: u64, workers: usize) -> Self {
        RunManifest {
            command: command.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            workers,
            versions: Versions::default(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            failures: Vec::new(),
            created_at: Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(InputDigest::of(path)?);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| crate::Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
