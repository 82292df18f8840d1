//! Run manifest: one JSON file per run directory that records what was run,
//! with which configuration, and which artifacts each stage produced.
//!
//! Every stage rewrites the manifest after it finishes; artifacts are listed
//! with content digests so a reviewer can confirm that the files on disk are
//! the ones the stages actually produced.

use crate::digest::sha256_hex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageInfo {
    pub completed_unix: u64,
    /// Artifact file name, relative to the run directory.
    pub artifact: String,
    pub sha256: String,
    pub records: usize,
    /// Non-cached provider calls spent in this stage.
    #[serde(default)]
    pub provider_calls: u64,
    /// Cache hits observed in this stage.
    #[serde(default)]
    pub cache_hits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Short stable id: digest of (config digest, seed, mode).
    pub run_id: String,
    pub config_digest: String,
    pub seed: u64,
    pub mode: String,
    pub created_unix: u64,
    /// Stage name -> completion record, e.g. "cut" -> cuts.jsonl info.
    pub stages: BTreeMap<String, StageInfo>,
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(config_digest: &str, seed: u64, mode: &str) -> Self {
        let run_id = sha256_hex(&[
            config_digest.as_bytes(),
            b"\0",
            &seed.to_le_bytes(),
            b"\0",
            mode.as_bytes(),
        ])[..12]
            .to_string();
        Self {
            run_id,
            config_digest: config_digest.to_string(),
            seed,
            mode: mode.to_string(),
            created_unix: now_unix(),
            stages: BTreeMap::new(),
        }
    }

    /// Load the manifest from `dir`, or create a fresh one when absent or
    /// when config/seed/mode changed (a changed run gets a new identity).
    pub fn load_or_new(dir: &Path, config_digest: &str, seed: u64, mode: &str) -> Self {
        let path = dir.join("manifest.json");
        if let Ok(text) = std::fs::read_to_string(&path) {
            if let Ok(m) = serde_json::from_str::<RunManifest>(&text) {
                if m.config_digest == config_digest && m.seed == seed && m.mode == mode {
                    return m;
                }
                log::warn!(
                    "run parameters changed (run_id {}); starting a fresh manifest",
                    m.run_id
                );
            }
        }
        Self::new(config_digest, seed, mode)
    }

    /// Record a completed stage, digesting the artifact on disk.
    pub fn record_stage(
        &mut self,
        stage: &str,
        dir: &Path,
        artifact: &str,
        records: usize,
        provider_calls: u64,
        cache_hits: u64,
    ) -> anyhow::Result<()> {
        let bytes = std::fs::read(dir.join(artifact))?;
        self.stages.insert(
            stage.to_string(),
            StageInfo {
                completed_unix: now_unix(),
                artifact: artifact.to_string(),
                sha256: sha256_hex(&[&bytes]),
                records,
                provider_calls,
                cache_hits,
            },
        );
        self.save(dir)
    }

    pub fn save(&self, dir: &Path) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(dir.join("manifest.json"), text)?;
        Ok(())
    }
}
