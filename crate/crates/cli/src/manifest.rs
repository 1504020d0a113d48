use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::run::InputFile;

pub const TOOL: &str = "midway";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Everything needed to rerun a command exactly.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: Option<u64>,
    /// The request as run; null fields took their defaults.
    pub config: serde_json::Value,
    pub inputs: Vec<InputFile>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, seed: Option<u64>, config: serde_json::Value, inputs: Vec<InputFile>) -> Self {
        Manifest {
            tool: TOOL,
            version: VERSION,
            command: command.to_string(),
            seed,
            config,
            inputs,
            outputs: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}
