//! Run manifest: config snapshot, input checksums, and per-stage outputs.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{PipelineConfig, ResolvedPaths};
use crate::ingest::SourceEntry;
use crate::rng::StreamSeeds;

pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub stage: String,
    pub seconds: f64,
    pub outputs: Vec<OutputEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub seeds: StreamSeeds,
    pub config: PipelineConfig,
    pub paths: ResolvedPaths,
    pub inputs: Vec<SourceEntry>,
    pub stages: Vec<StageEntry>,
}

impl RunManifest {
    pub fn new(config: &PipelineConfig, seeds: StreamSeeds, paths: ResolvedPaths) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seeds,
            config: config.clone(),
            paths,
            inputs: Vec::new(),
            stages: Vec::new(),
        }
    }

    /// Keeps the stage history of an existing manifest in `dir` when it was
    /// produced with the same seeds; otherwise starts fresh.
    pub fn open(dir: &Path, config: &PipelineConfig, seeds: StreamSeeds, paths: ResolvedPaths) -> Self {
        let fresh = Self::new(config, seeds, paths);
        let Ok(text) = fs::read_to_string(dir.join(MANIFEST_FILE)) else {
            return fresh;
        };
        match serde_json::from_str::<RunManifest>(&text) {
            Ok(old) if old.seeds == seeds => RunManifest {
                inputs: old.inputs,
                stages: old.stages,
                ..fresh
            },
            _ => fresh,
        }
    }

    /// Replaces any earlier entry for the same stage.
    pub fn record(&mut self, entry: StageEntry) {
        self.stages.retain(|s| s.stage != entry.stage);
        self.stages.push(entry);
    }

    pub fn save(&self, dir: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        fs::write(dir.join(MANIFEST_FILE), text + "\n")
    }
}
