//! Run manifests: enough metadata to replay a command exactly.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use lvggm::Result;

/// Replay record written alongside every command's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub parameters: Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub notes: Vec<String>,
    pub wall_time_s: f64,
}

pub struct ManifestBuilder {
    command: String,
    parameters: Value,
    seeds: Vec<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    notes: Vec<String>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, parameters: Value) -> Self {
        Self {
            command: command.to_string(),
            parameters,
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn note(&mut self, msg: &str) -> &mut Self {
        self.notes.push(msg.to_string());
        self
    }

    pub fn seed(&mut self, s: u64) -> &mut Self {
        self.seeds.push(s);
        self
    }

    pub fn input(&mut self, p: &Path) -> &mut Self {
        self.inputs.push(p.to_path_buf());
        self
    }

    pub fn output(&mut self, p: &Path) -> &mut Self {
        self.outputs.push(p.to_path_buf());
        self
    }

    /// Write `manifest.json` next to the outputs via a same-directory
    /// temporary file and rename, so a crash never leaves a torn manifest.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let manifest = RunManifest {
            command: self.command.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            parameters: self.parameters.clone(),
            seeds: self.seeds.clone(),
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
            notes: self.notes.clone(),
            wall_time_s: self.started.elapsed().as_secs_f64(),
        };
        let path = dir.join("manifest.json");
        let tmp = dir.join(".manifest.json.tmp");
        lvggm::io::write_json(&tmp, &manifest)?;
        std::fs::rename(&tmp, &path)?;
        Ok(path)
    }
}
