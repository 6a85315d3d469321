use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::io::{self, IoError};

pub const MANIFEST_FORMAT: u32 = 1;

/// What one stage ran with and what it wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub params: serde_json::Value,
    /// Artifact file name to SHA-256 of its bytes.
    pub outputs: BTreeMap<String, String>,
    /// Seconds since the Unix epoch; only present when timestamps are enabled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<u64>,
}

/// Everything that determines a run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: u32,
    pub seed: u64,
    pub corpus_digest: String,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn new(seed: u64, corpus_digest: impl Into<String>) -> Self {
        Self { format: MANIFEST_FORMAT, seed, corpus_digest: corpus_digest.into(), stages: BTreeMap::new() }
    }

    pub fn record_stage(&mut self, stage: &str, record: StageRecord) {
        self.stages.insert(stage.to_string(), record);
    }

    /// SHA-256 of the manifest's canonical JSON (keys sorted, no whitespace).
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_vec(self).expect("manifest serializes"))
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        io::read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        io::write_json(path, self)
    }
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(v: serde_json::Value) -> StageRecord {
        StageRecord { params: v, outputs: BTreeMap::new(), finished_at: None }
    }

    #[test]
    fn digest_covers_every_field() {
        let mut m = RunManifest::new(7, "abc");
        m.record_stage("ingest", record(serde_json::json!({"tokenizer": "unicode-words", "max_tokens": 1000})));
        let base = m.digest();
        let mut seed = m.clone();
        seed.seed = 8;
        let mut corpus = m.clone();
        corpus.corpus_digest = "abd".into();
        let mut param = m.clone();
        param.record_stage("ingest", record(serde_json::json!({"tokenizer": "unicode-words", "max_tokens": 999})));
        let mut stamped = m.clone();
        stamped.stages.get_mut("ingest").unwrap().finished_at = Some(1);
        for other in [seed, corpus, param, stamped] {
            assert_ne!(other.digest(), base);
        }
    }

    #[test]
    fn digest_is_independent_of_insertion_order() {
        let mut a = RunManifest::new(1, "x");
        a.record_stage("b", record(serde_json::json!({"z": 1, "a": 2})));
        a.record_stage("a", record(serde_json::json!(null)));
        let mut b = RunManifest::new(1, "x");
        b.record_stage("a", record(serde_json::json!(null)));
        b.record_stage("b", record(serde_json::json!({"a": 2, "z": 1})));
        assert_eq!(a.digest(), b.digest());
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let mut m = RunManifest::new(3, "c");
        m.record_stage("x", record(serde_json::json!({"f": 0.1})));
        m.save(&path).unwrap();
        assert_eq!(RunManifest::load(&path).unwrap(), m);
    }
}
