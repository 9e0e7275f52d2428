use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::io::write_json;

/// Run record written next to every command's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub seed: u64,
    pub preset: String,
    /// The config file exactly as read, when one was given.
    pub config_text: Option<String>,
    /// The resolved settings after defaults and overrides.
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
    pub wall_time_secs: f64,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("manifest.json"), self)
    }
}
