use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detector::DetectorConfig;
use crate::trace::DecodingConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

pub fn text_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendIdentity {
    /// SHA-256 of the base URL, or `"mock"`.
    pub url_sha256: String,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_spec_sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Written once per output directory; enough to rerun the command.
/// All digests are SHA-256.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub command: String,
    pub command_line: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decoding: Option<DecodingConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detector: Option<DetectorConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend: Option<BackendIdentity>,
    pub inputs: Vec<InputDigest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run_seed: Option<u64>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

pub fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            command_line: std::env::args().collect(),
            decoding: None,
            detector: None,
            backend: None,
            inputs: Vec::new(),
            run_seed: None,
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> std::io::Result<()> {
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: file_digest(path)?,
        });
        Ok(())
    }
}
