//! `manifest.json`: everything needed to rerun a command.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";
/// Resolved configuration; `--config` on it replays the run.
pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FORMAT: &str = "debias-cbm-run/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: String,
    pub command: String,
    pub master_seed: u64,
    pub seeds: BTreeMap<String, u64>,
    pub config: RunConfig,
    /// Worker threads used; results do not depend on it.
    pub jobs: usize,
    /// `ok` or `failed`.
    pub status: String,
    pub error: Option<String>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
    pub summary: serde_json::Map<String, serde_json::Value>,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        Ok(serde_json::from_str(&text)?)
    }
}
