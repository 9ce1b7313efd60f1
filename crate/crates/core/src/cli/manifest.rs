//! The run manifest: configuration snapshot, seed, input hashes, outputs and
//! stage status of every command run in an output directory.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub input_hash: String,
    pub outputs: Vec<String>,
    pub status: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: serde_json::Value,
    pub config_hash: String,
    pub seed: u64,
    pub stages: BTreeMap<String, StageRecord>,
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    crate::mlp::hex(&Sha256::digest(bytes))
}

impl RunManifest {
    pub fn load_or_default(dir: &Path) -> Self {
        std::fs::read_to_string(dir.join(MANIFEST_FILE))
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or_default()
    }

    pub fn record(&mut self, stage: &str, input_hash: String, outputs: Vec<String>, status: &str) {
        self.stages.insert(
            stage.to_string(),
            StageRecord {
                input_hash,
                outputs,
                status: status.to_string(),
            },
        );
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let p = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }
}
