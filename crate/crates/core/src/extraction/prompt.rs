use serde::{Deserialize, Serialize};

use crate::corpus::ChunkContext;
use crate::digest::sha256_hex;
use crate::gateway::ChatRequest;

/// System prompt used for motif extraction, byte for byte.
pub const EXTRACTION_PROMPT: &str = "Identify potential literary motifs (recurring recognizable and meaningful patterns of meaning) from the provided text, expressed as concise, single sentences. Focus on motifs related to characters, objects, emotions, or events. Only extract motifs from the current text, ignoring the preceding context. Do not mention character names, and refrain from providing any additional commentary beyond the list of motifs.";

pub const CONTEXT_HEADER: &str = "PRECEDING CONTEXT:";
pub const CURRENT_TEXT_HEADER: &str = "CURRENT TEXT:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionPrompt {
    pub text: String,
}

impl Default for ExtractionPrompt {
    fn default() -> Self {
        Self { text: EXTRACTION_PROMPT.to_string() }
    }
}

impl ExtractionPrompt {
    pub fn checksum(&self) -> String {
        sha256_hex(&self.text)
    }
}

/// Model parameters for extraction calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractionSettings {
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    /// Largest tolerated share of failed chunks before the run is aborted.
    #[serde(default = "default_failure_threshold")]
    pub failure_threshold: f64,
}

fn default_max_output_tokens() -> u32 {
    512
}

fn default_failure_threshold() -> f64 {
    0.01
}

impl ExtractionSettings {
    pub fn new(model: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            temperature: 0.0,
            max_output_tokens: default_max_output_tokens(),
            failure_threshold: default_failure_threshold(),
        }
    }
}

/// User message: the context block (when there is one) followed by the
/// current chunk, each under its own header line.
pub fn build_user_content(cc: &ChunkContext) -> String {
    let mut out = String::new();
    if !cc.context_text.trim().is_empty() {
        out.push_str(CONTEXT_HEADER);
        out.push('\n');
        out.push_str(&cc.context_text);
        out.push_str("\n\n");
    }
    out.push_str(CURRENT_TEXT_HEADER);
    out.push('\n');
    out.push_str(&cc.chunk.text);
    out
}

pub fn build_extraction_request(
    cc: &ChunkContext,
    prompt: &ExtractionPrompt,
    settings: &ExtractionSettings,
) -> ChatRequest {
    ChatRequest {
        model: settings.model.clone(),
        system_prompt: prompt.text.clone(),
        user_content: build_user_content(cc),
        temperature: settings.temperature,
        max_output_tokens: settings.max_output_tokens,
    }
}
