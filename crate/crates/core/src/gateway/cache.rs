//! Content-addressed response cache: one JSON file per request digest.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::ChatRequest;
use crate::digest::Sha256Writer;
use crate::io::{self, IoError};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey(String);

impl CacheKey {
    /// Digest of the endpoint kind, model id and the canonical JSON request body.
    pub fn chat(req: &ChatRequest) -> Self {
        let body = serde_json::to_string(req).expect("chat request serializes");
        let mut h = Sha256Writer::new();
        h.field("chat").field(&req.model).field(body);
        Self(h.finish_hex())
    }

    pub fn embedding(model: &str, text: &str) -> Self {
        let mut h = Sha256Writer::new();
        h.field("embedding").field(model).field(text);
        Self(h.finish_hex())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Serialize, Deserialize)]
struct Entry<T> {
    model: String,
    response: T,
}

#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, kind: &str, key: &CacheKey) -> PathBuf {
        self.dir.join(kind).join(&key.0[..2]).join(format!("{}.json", key.0))
    }

    fn get<T: DeserializeOwned>(&self, kind: &str, key: &CacheKey) -> Result<Option<T>, IoError> {
        let path = self.path(kind, key);
        if !path.exists() {
            return Ok(None);
        }
        let entry: Entry<T> = io::read_json(&path)?;
        Ok(Some(entry.response))
    }

    fn put<T: Serialize>(&self, kind: &str, key: &CacheKey, model: &str, response: T) -> Result<(), IoError> {
        let entry = Entry { model: model.to_string(), response };
        io::write_json(&self.path(kind, key), &entry)
    }

    pub fn get_chat(&self, key: &CacheKey) -> Result<Option<String>, IoError> {
        self.get("chat", key)
    }

    pub fn put_chat(&self, key: &CacheKey, model: &str, text: &str) -> Result<(), IoError> {
        self.put("chat", key, model, text)
    }

    pub fn get_embedding(&self, key: &CacheKey) -> Result<Option<Vec<f64>>, IoError> {
        self.get("embedding", key)
    }

    pub fn put_embedding(&self, key: &CacheKey, model: &str, v: &[f64]) -> Result<(), IoError> {
        self.put("embedding", key, model, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req() -> ChatRequest {
        ChatRequest {
            model: "m".into(),
            system_prompt: "s".into(),
            user_content: "u".into(),
            temperature: 0.0,
            max_output_tokens: 10,
        }
    }

    #[test]
    fn equal_requests_share_a_key() {
        assert_eq!(CacheKey::chat(&req()), CacheKey::chat(&req()));
    }

    #[test]
    fn every_field_changes_the_key() {
        let base = CacheKey::chat(&req());
        let variants = [
            ChatRequest { model: "m2".into(), ..req() },
            ChatRequest { system_prompt: "s2".into(), ..req() },
            ChatRequest { user_content: "u2".into(), ..req() },
            ChatRequest { temperature: 0.5, ..req() },
            ChatRequest { max_output_tokens: 11, ..req() },
        ];
        for v in variants {
            assert_ne!(CacheKey::chat(&v), base);
        }
        assert_ne!(CacheKey::embedding("m", "u"), CacheKey::embedding("m2", "u"));
    }

    #[test]
    fn embeddings_round_trip_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path());
        let key = CacheKey::embedding("e", "text");
        let v = vec![0.1 + 0.2, -1.0 / 3.0, 1e-300, std::f64::consts::FRAC_1_SQRT_2];
        cache.put_embedding(&key, "e", &v).unwrap();
        let back = cache.get_embedding(&key).unwrap().unwrap();
        assert_eq!(
            back.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            v.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
        assert!(cache.get_chat(&CacheKey::embedding("e", "text")).unwrap().is_none());
    }
}
