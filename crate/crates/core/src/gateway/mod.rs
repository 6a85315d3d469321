//! Chat-completion and embedding traffic.
//!
//! Every model call in the pipeline goes through a [`Gateway`]. The gateway
//! validates requests, serves repeats from a content-addressed disk cache,
//! retries transient backend failures, and runs batches of requests on a
//! bounded worker pool.

mod cache;
mod finetune;
mod mock;
mod openai;

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cache::{CacheKey, ResponseCache};
pub use finetune::{emit_finetune_dataset, FinetuneError, FinetuneSpec, FinetuneSummary};
pub use mock::MockBackend;
pub use openai::OpenAiBackend;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub system_prompt: String,
    pub user_content: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.model.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("model id is empty".into()));
        }
        if self.system_prompt.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("system prompt is empty".into()));
        }
        if self.user_content.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("user content is empty".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} is not a finite non-negative number",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingRequest {
    pub model: String,
    pub texts: Vec<String>,
}

impl EmbeddingRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.model.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("model id is empty".into()));
        }
        if self.texts.is_empty() {
            return Err(GatewayError::InvalidRequest("no texts to embed".into()));
        }
        if let Some(i) = self.texts.iter().position(|t| t.is_empty()) {
            return Err(GatewayError::InvalidRequest(format!("text {i} is empty")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
}

impl BackendError {
    fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            BackendError::Malformed(_) => false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend {backend} failed after {attempts} attempt(s): {source}")]
    Backend {
        backend: String,
        attempts: u32,
        #[source]
        source: BackendError,
    },
    #[error("offline mode: no cached response for {kind} request {key}")]
    OfflineMiss { kind: &'static str, key: String },
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("backend returned {got} embeddings for {expected} texts")]
    CountMismatch { expected: usize, got: usize },
    #[error("embedding for text {index} contains a non-finite value")]
    NonFinite { index: usize },
    #[error("cache: {0}")]
    Cache(#[from] crate::io::IoError),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

/// A model endpoint. Implementations must be safe to call from many threads.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    /// Whether calls leave the process. Offline mode refuses cache misses on
    /// remote backends.
    fn is_remote(&self) -> bool;

    fn chat(&self, req: &ChatRequest) -> Result<String, BackendError>;

    fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 3, base_delay_ms: 500 }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self { max_retries: 0, base_delay_ms: 0 }
    }

    fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u64 << attempt.min(6);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(30_000))
    }
}

/// Call counters, readable while the gateway is in use.
#[derive(Debug, Default)]
pub struct GatewayStats {
    chat_calls: AtomicUsize,
    chat_hits: AtomicUsize,
    embed_calls: AtomicUsize,
    embed_texts_sent: AtomicUsize,
    embed_hits: AtomicUsize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsSnapshot {
    pub chat_calls: usize,
    pub chat_cache_hits: usize,
    pub embed_calls: usize,
    pub embed_texts_sent: usize,
    pub embed_cache_hits: usize,
}

impl StatsSnapshot {
    pub fn backend_calls(&self) -> usize {
        self.chat_calls + self.embed_calls
    }
}

impl GatewayStats {
    pub fn snapshot(&self) -> StatsSnapshot {
        StatsSnapshot {
            chat_calls: self.chat_calls.load(Ordering::Relaxed),
            chat_cache_hits: self.chat_hits.load(Ordering::Relaxed),
            embed_calls: self.embed_calls.load(Ordering::Relaxed),
            embed_texts_sent: self.embed_texts_sent.load(Ordering::Relaxed),
            embed_cache_hits: self.embed_hits.load(Ordering::Relaxed),
        }
    }
}

pub const DEFAULT_PARALLELISM: usize = 4;
pub const DEFAULT_EMBED_BATCH: usize = 64;

pub struct Gateway {
    backend: Arc<dyn Backend>,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
    offline: bool,
    embed_batch: usize,
    pool: rayon::ThreadPool,
    stats: GatewayStats,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.name())
            .field("cache", &self.cache)
            .field("retry", &self.retry)
            .field("offline", &self.offline)
            .field("parallelism", &self.pool.current_num_threads())
            .finish()
    }
}

impl Gateway {
    pub fn builder(backend: Arc<dyn Backend>) -> GatewayBuilder {
        GatewayBuilder {
            backend,
            cache: None,
            retry: RetryPolicy::default(),
            offline: false,
            parallelism: DEFAULT_PARALLELISM,
            embed_batch: DEFAULT_EMBED_BATCH,
        }
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    pub fn stats(&self) -> StatsSnapshot {
        self.stats.snapshot()
    }

    pub fn parallelism(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Maps `f` over `items` on the gateway's worker pool, preserving order.
    pub fn par_map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        self.pool.install(|| items.par_iter().map(f).collect())
    }

    fn with_retries<R>(&self, mut call: impl FnMut() -> Result<R, BackendError>) -> Result<R, GatewayError> {
        let mut attempt = 0;
        loop {
            match call() {
                Ok(r) => return Ok(r),
                Err(e) if e.is_retryable() && attempt < self.retry.max_retries => {
                    tracing::warn!(backend = self.backend.name(), attempt, error = %e, "retrying");
                    std::thread::sleep(self.retry.delay(attempt));
                    attempt += 1;
                }
                Err(source) => {
                    return Err(GatewayError::Backend {
                        backend: self.backend.name().to_string(),
                        attempts: attempt + 1,
                        source,
                    })
                }
            }
        }
    }

    pub fn chat_complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        req.validate()?;
        let key = CacheKey::chat(req);
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get_chat(&key)? {
                self.stats.chat_hits.fetch_add(1, Ordering::Relaxed);
                return Ok(hit);
            }
        }
        if self.offline && self.backend.is_remote() {
            return Err(GatewayError::OfflineMiss { kind: "chat", key: key.to_string() });
        }
        self.stats.chat_calls.fetch_add(1, Ordering::Relaxed);
        let text = self.with_retries(|| self.backend.chat(req))?;
        if let Some(cache) = &self.cache {
            cache.put_chat(&key, &req.model, &text)?;
        }
        Ok(text)
    }

    /// Embeds every text; each vector is cached on its own, so only texts
    /// never seen before reach the backend.
    pub fn embed(&self, req: &EmbeddingRequest) -> Result<Vec<Vec<f64>>, GatewayError> {
        req.validate()?;
        // Deduplicate texts; `slot[i]` is the position of text i in `unique`.
        let mut unique: Vec<CacheKey> = Vec::new();
        let mut unique_text: Vec<&str> = Vec::new();
        let mut slot = Vec::with_capacity(req.texts.len());
        let mut seen: HashMap<CacheKey, usize> = HashMap::new();
        for text in &req.texts {
            let key = CacheKey::embedding(&req.model, text);
            let pos = *seen.entry(key.clone()).or_insert_with(|| {
                unique.push(key);
                unique_text.push(text);
                unique.len() - 1
            });
            slot.push(pos);
        }

        let mut vectors: Vec<Option<Vec<f64>>> = vec![None; unique.len()];
        if let Some(cache) = &self.cache {
            for (u, key) in unique.iter().enumerate() {
                if let Some(v) = cache.get_embedding(key)? {
                    self.stats.embed_hits.fetch_add(1, Ordering::Relaxed);
                    vectors[u] = Some(v);
                }
            }
        }
        let missing: Vec<usize> = (0..unique.len()).filter(|&u| vectors[u].is_none()).collect();

        if !missing.is_empty() && self.offline && self.backend.is_remote() {
            return Err(GatewayError::OfflineMiss { kind: "embedding", key: unique[missing[0]].to_string() });
        }

        for batch in missing.chunks(self.embed_batch) {
            let texts: Vec<String> = batch.iter().map(|&u| unique_text[u].to_string()).collect();
            self.stats.embed_calls.fetch_add(1, Ordering::Relaxed);
            self.stats.embed_texts_sent.fetch_add(texts.len(), Ordering::Relaxed);
            let got = self.with_retries(|| self.backend.embed(&req.model, &texts))?;
            if got.len() != texts.len() {
                return Err(GatewayError::CountMismatch { expected: texts.len(), got: got.len() });
            }
            for (&u, v) in batch.iter().zip(got) {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(GatewayError::NonFinite { index: slot.iter().position(|&s| s == u).unwrap_or(u) });
                }
                if let Some(cache) = &self.cache {
                    cache.put_embedding(&unique[u], &req.model, &v)?;
                }
                vectors[u] = Some(v);
            }
        }

        let vectors: Vec<Vec<f64>> = vectors.into_iter().map(|v| v.expect("every unique text resolved")).collect();
        let result: Vec<Vec<f64>> = slot.iter().map(|&u| vectors[u].clone()).collect();
        let dim = result[0].len();
        if let Some(bad) = result.iter().find(|v| v.len() != dim) {
            return Err(GatewayError::DimensionMismatch { expected: dim, got: bad.len() });
        }
        Ok(result)
    }
}

pub struct GatewayBuilder {
    backend: Arc<dyn Backend>,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
    offline: bool,
    parallelism: usize,
    embed_batch: usize,
}

impl GatewayBuilder {
    pub fn cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn offline(mut self, offline: bool) -> Self {
        self.offline = offline;
        self
    }

    pub fn parallelism(mut self, n: usize) -> Self {
        self.parallelism = n.max(1);
        self
    }

    pub fn embed_batch(mut self, n: usize) -> Self {
        self.embed_batch = n.max(1);
        self
    }

    pub fn build(self) -> Result<Gateway, GatewayError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.parallelism)
            .build()
            .map_err(|e| GatewayError::Pool(e.to_string()))?;
        Ok(Gateway {
            backend: self.backend,
            cache: self.cache,
            retry: self.retry,
            offline: self.offline,
            embed_batch: self.embed_batch,
            pool,
            stats: GatewayStats::default(),
        })
    }
}
