//! OpenAI-compatible HTTP backend (`/chat/completions`, `/embeddings`).

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{Backend, BackendError, ChatRequest};

#[derive(Debug, Clone)]
pub struct OpenAiBackend {
    name: String,
    base_url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ChatEnvelope {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct EmbeddingEnvelope {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

impl OpenAiBackend {
    pub fn new(
        name: impl Into<String>,
        base_url: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self { name: name.into(), base_url: base_url.into().trim_end_matches('/').to_string(), api_key, client })
    }

    fn post(&self, path: &str, body: serde_json::Value) -> Result<String, BackendError> {
        let mut req = self.client.post(format!("{}/{path}", self.base_url)).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| BackendError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::Status { status: status.as_u16(), body: text });
        }
        Ok(text)
    }
}

impl Backend for OpenAiBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn is_remote(&self) -> bool {
        true
    }

    fn chat(&self, req: &ChatRequest) -> Result<String, BackendError> {
        let body = json!({
            "model": req.model,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": req.user_content},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        });
        let raw = self.post("chat/completions", body)?;
        let env: ChatEnvelope = serde_json::from_str(&raw).map_err(|e| BackendError::Malformed(e.to_string()))?;
        env.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Malformed("no choices[0].message.content".into()))
    }

    fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        let raw = self.post("embeddings", json!({ "model": model, "input": texts }))?;
        let env: EmbeddingEnvelope = serde_json::from_str(&raw).map_err(|e| BackendError::Malformed(e.to_string()))?;
        let mut items = env.data;
        if items.iter().all(|i| i.index.is_some()) {
            items.sort_by_key(|i| i.index);
        }
        Ok(items.into_iter().map(|i| i.embedding).collect())
    }
}
