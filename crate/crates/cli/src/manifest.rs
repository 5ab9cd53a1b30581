//! Run manifests. The determinism token hashes the configuration echo and
//! the bytes of every output, so it is the same on any host and at any
//! thread count when the outputs are.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// Fully resolved configuration; feeding it back through `--config`
    /// reproduces the run.
    pub config: serde_json::Value,
    pub seed: u64,
    pub grid_hashes: Vec<String>,
    pub threads: Option<usize>,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<OutputFile>,
    pub determinism_token: String,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: u64, grid_hashes: Vec<String>, outputs: &[(String, Vec<u8>)]) -> Self {
        let mut token = Sha256::new();
        token.update(command.as_bytes());
        token.update(config.to_string().as_bytes());
        let files = outputs
            .iter()
            .map(|(name, bytes)| {
                token.update(name.as_bytes());
                token.update(bytes);
                OutputFile { name: name.clone(), sha256: hex::encode(Sha256::digest(bytes)) }
            })
            .collect();
        RunManifest {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config,
            seed,
            grid_hashes,
            threads: None,
            wall_clock_seconds: 0.0,
            outputs: files,
            determinism_token: hex::encode(token.finalize()),
        }
    }

    /// A manifest document is recognized by its token field.
    pub fn looks_like(doc: &serde_json::Value) -> bool {
        doc.get("determinism_token").is_some() && doc.get("config").is_some()
    }
}
