//! Training-file emission for fine-tuning the extraction model.
//!
//! Only the dataset and a hyperparameter sidecar are written; submitting the
//! job is left to the provider's own tooling.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::ChunkContext;
use crate::extraction::{build_user_content, ExtractionPrompt};
use crate::io::{self, IoError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneSpec {
    pub base_model: String,
    pub n_examples: usize,
    pub batches: usize,
    pub batch_size: usize,
    pub lr_multiplier: f64,
}

impl Default for FinetuneSpec {
    fn default() -> Self {
        Self { base_model: "gpt-4o-2024-08-06".into(), n_examples: 74, batches: 3, batch_size: 1, lr_multiplier: 2.0 }
    }
}

impl FinetuneSpec {
    pub fn validate(&self) -> Result<(), FinetuneError> {
        if self.base_model.trim().is_empty() {
            return Err(FinetuneError::InvalidSpec("base_model is empty".into()));
        }
        if self.n_examples < 1 {
            return Err(FinetuneError::InvalidSpec("n_examples must be at least 1".into()));
        }
        if self.batches < 1 {
            return Err(FinetuneError::InvalidSpec("batches must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(FinetuneError::InvalidSpec("batch_size must be at least 1".into()));
        }
        if !(self.lr_multiplier > 0.0 && self.lr_multiplier.is_finite()) {
            return Err(FinetuneError::InvalidSpec(format!("lr_multiplier {} must be positive", self.lr_multiplier)));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FinetuneError {
    #[error("no annotations to write")]
    Empty,
    #[error("annotation {index} ({novel_id} chunk {chunk_index}) has no gold motifs")]
    EmptyMotifs { index: usize, novel_id: String, chunk_index: usize },
    #[error("annotation {index} has a blank motif sentence")]
    BlankMotif { index: usize },
    #[error("spec expects {expected} examples but {got} annotations were given")]
    CountMismatch { expected: usize, got: usize },
    #[error("invalid fine-tune spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneSummary {
    pub dataset_path: PathBuf,
    pub manifest_path: PathBuf,
    pub records: usize,
    pub dataset_sha256: String,
    pub prompt_sha256: String,
    pub spec: FinetuneSpec,
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct TrainingRecord<'a> {
    messages: [Message<'a>; 3],
}

/// Renders gold motifs as the numbered list the model is trained to produce.
pub fn numbered_list(motifs: &[String]) -> String {
    motifs.iter().enumerate().map(|(i, m)| format!("{}. {}", i + 1, m.trim())).collect::<Vec<_>>().join("\n")
}

/// Writes one chat-format JSONL record per annotation to `out_path`, plus
/// `<out_path>.manifest.json` echoing the spec.
pub fn emit_finetune_dataset(
    annotations: &[(ChunkContext, Vec<String>)],
    spec: &FinetuneSpec,
    prompt: &ExtractionPrompt,
    out_path: &Path,
) -> Result<FinetuneSummary, FinetuneError> {
    spec.validate()?;
    if annotations.is_empty() {
        return Err(FinetuneError::Empty);
    }
    for (index, (cc, motifs)) in annotations.iter().enumerate() {
        if motifs.is_empty() {
            return Err(FinetuneError::EmptyMotifs {
                index,
                novel_id: cc.chunk.novel_id.clone(),
                chunk_index: cc.chunk.index,
            });
        }
        if motifs.iter().any(|m| m.trim().is_empty()) {
            return Err(FinetuneError::BlankMotif { index });
        }
    }
    if annotations.len() != spec.n_examples {
        return Err(FinetuneError::CountMismatch { expected: spec.n_examples, got: annotations.len() });
    }

    let mut body = Vec::new();
    for (cc, motifs) in annotations {
        let user = build_user_content(cc);
        let assistant = numbered_list(motifs);
        let record = TrainingRecord {
            messages: [
                Message { role: "system", content: &prompt.text },
                Message { role: "user", content: &user },
                Message { role: "assistant", content: &assistant },
            ],
        };
        body.extend(serde_json::to_vec(&record).expect("training record serializes"));
        body.push(b'\n');
    }
    io::write_atomic(out_path, &body)?;

    let mut manifest_path = out_path.as_os_str().to_owned();
    manifest_path.push(".manifest.json");
    let summary = FinetuneSummary {
        dataset_path: out_path.to_path_buf(),
        manifest_path: PathBuf::from(manifest_path),
        records: annotations.len(),
        dataset_sha256: crate::digest::sha256_hex(&body),
        prompt_sha256: prompt.checksum(),
        spec: spec.clone(),
    };
    io::write_json(&summary.manifest_path, &summary)?;
    Ok(summary)
}
