use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// One record per experiment. The config hash covers the command, its
/// parameters and the seed; re-running with the same inputs reproduces
/// every field except `wall_clock_seconds`.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub wall_clock_seconds: f64,
    pub params: Value,
    pub outcome: Value,
    pub pass: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Starts the clock for a run; [`ManifestBuilder::finish`] seals it.
pub struct ManifestBuilder {
    command: String,
    seed: u64,
    params: Value,
    started: Instant,
}

impl ManifestBuilder {
    pub fn start(command: &str, seed: u64, params: Value) -> Self {
        ManifestBuilder { command: command.to_string(), seed, params, started: Instant::now() }
    }

    pub fn finish(self, outcome: Value, pass: bool) -> RunManifest {
        let key = serde_json::json!({ "command": self.command, "params": self.params, "seed": self.seed });
        let versions = BTreeMap::from([
            ("spinlab".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("spinlab-core".to_string(), spinlab_core::VERSION.to_string()),
        ]);
        RunManifest {
            config_hash: sha256_hex(key.to_string().as_bytes()),
            command: self.command,
            seed: self.seed,
            versions,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            params: self.params,
            outcome,
            pass,
        }
    }
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_depends_on_inputs_only() {
        let a = ManifestBuilder::start("gap", 1, serde_json::json!({"x": 1})).finish(Value::Null, true);
        let b = ManifestBuilder::start("gap", 1, serde_json::json!({"x": 1})).finish(serde_json::json!(3), false);
        let c = ManifestBuilder::start("gap", 2, serde_json::json!({"x": 1})).finish(Value::Null, true);
        assert_eq!(a.config_hash, b.config_hash);
        assert_ne!(a.config_hash, c.config_hash);
        assert_eq!(a.config_hash.len(), 64);
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
