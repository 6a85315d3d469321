//! Motif extraction: one chat call per chunk, reply parsed into motif records.

mod parse;
mod prompt;

use serde::{Deserialize, Serialize};

pub use parse::{parse_completion, parse_motif_list, ParsedMotifs};
pub use prompt::{
    build_extraction_request, build_user_content, ExtractionPrompt, ExtractionSettings, CONTEXT_HEADER,
    CURRENT_TEXT_HEADER, EXTRACTION_PROMPT,
};

use crate::corpus::{contexts, Chunk};
use crate::gateway::Gateway;

/// One motif sentence and the chunk it came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MotifRecord {
    pub novel_id: String,
    pub chunk_index: usize,
    /// Position in the model's list, after parsing.
    pub ordinal: usize,
    pub sentence: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionWarning {
    pub novel_id: String,
    pub chunk_index: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionOutput {
    /// Sorted by (novel_id, chunk_index, ordinal).
    pub records: Vec<MotifRecord>,
    pub warnings: Vec<ExtractionWarning>,
    pub chunks_total: usize,
    pub chunks_failed: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum ExtractionError {
    #[error("{failed} of {total} chunks failed (threshold {threshold}); first failure: {first}")]
    TooManyFailures { failed: usize, total: usize, threshold: f64, first: String },
}

/// Extracts motifs from every chunk. Chunks must be grouped by novel in index
/// order. Individual chunk failures are tolerated up to the configured share.
pub fn extract_corpus(
    chunks: &[Chunk],
    gateway: &Gateway,
    prompt: &ExtractionPrompt,
    settings: &ExtractionSettings,
) -> Result<ExtractionOutput, ExtractionError> {
    let ctxs = contexts(chunks);
    let replies = gateway.par_map(&ctxs, |cc| {
        let req = build_extraction_request(cc, prompt, settings);
        gateway.chat_complete(&req)
    });

    let mut records = Vec::new();
    let mut warnings = Vec::new();
    let mut failures: Vec<ExtractionWarning> = Vec::new();
    for (cc, reply) in ctxs.iter().zip(replies) {
        let (novel_id, chunk_index) = (&cc.chunk.novel_id, cc.chunk.index);
        match reply {
            Ok(completion) => {
                let parsed = parse_completion(&completion);
                if let Some(message) = parsed.warning {
                    warnings.push(ExtractionWarning { novel_id: novel_id.clone(), chunk_index, message });
                }
                records.extend(parsed.sentences.into_iter().enumerate().map(|(ordinal, sentence)| MotifRecord {
                    novel_id: novel_id.clone(),
                    chunk_index,
                    ordinal,
                    sentence,
                }));
            }
            Err(e) => {
                tracing::warn!(novel = %novel_id, chunk = chunk_index, error = %e, "extraction failed");
                failures.push(ExtractionWarning {
                    novel_id: novel_id.clone(),
                    chunk_index,
                    message: format!("extraction failed: {e}"),
                });
            }
        }
    }

    let total = ctxs.len();
    let failed = failures.len();
    if total > 0 && failed as f64 / total as f64 > settings.failure_threshold {
        return Err(ExtractionError::TooManyFailures {
            failed,
            total,
            threshold: settings.failure_threshold,
            first: failures[0].message.clone(),
        });
    }
    warnings.extend(failures);
    warnings.sort_by(|a, b| (&a.novel_id, a.chunk_index).cmp(&(&b.novel_id, b.chunk_index)));
    records.sort_by(|a, b| (&a.novel_id, a.chunk_index, a.ordinal).cmp(&(&b.novel_id, b.chunk_index, b.ordinal)));
    tracing::info!(chunks = total, failed, records = records.len(), "extraction finished");
    Ok(ExtractionOutput { records, warnings, chunks_total: total, chunks_failed: failed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Backend, BackendError, ChatRequest, MockBackend, ResponseCache, RetryPolicy};
    use std::collections::HashSet;
    use std::sync::Arc;

    fn chunks(novels: &[(&str, usize)]) -> Vec<Chunk> {
        novels
            .iter()
            .flat_map(|(id, n)| {
                (0..*n).map(move |i| Chunk {
                    novel_id: id.to_string(),
                    index: i,
                    token_count: 3,
                    sentence_span: [i, i],
                    oversized_sentence: false,
                    text: format!("{id} chunk {i}."),
                })
            })
            .collect()
    }

    fn settings() -> ExtractionSettings {
        ExtractionSettings::new("ft:test")
    }

    #[test]
    fn three_motifs_per_chunk() {
        let gw = Gateway::builder(Arc::new(MockBackend::default())).build().unwrap();
        let out =
            extract_corpus(&chunks(&[("b", 4), ("a", 6)]), &gw, &ExtractionPrompt::default(), &settings()).unwrap();
        assert_eq!(out.records.len(), 30);
        assert_eq!(out.records[0].novel_id, "a");
        let keys: Vec<_> = out.records.iter().map(|r| (&r.novel_id, r.chunk_index, r.ordinal)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        let valid: HashSet<_> = chunks(&[("b", 4), ("a", 6)]).into_iter().map(|c| (c.novel_id, c.index)).collect();
        assert!(out.records.iter().all(|r| valid.contains(&(r.novel_id.clone(), r.chunk_index))));
    }

    #[test]
    fn warm_cache_rerun_is_identical_without_backend_calls() {
        let dir = tempfile::tempdir().unwrap();
        let run = || {
            let gw = Gateway::builder(Arc::new(MockBackend::default()))
                .cache(ResponseCache::new(dir.path()))
                .build()
                .unwrap();
            let out = extract_corpus(&chunks(&[("a", 10)]), &gw, &ExtractionPrompt::default(), &settings()).unwrap();
            (out, gw.stats().chat_calls)
        };
        let (first, calls1) = run();
        let (second, calls2) = run();
        assert_eq!(calls1, 10);
        assert_eq!(calls2, 0);
        assert_eq!(first, second);
    }

    struct FailsOn {
        needle: String,
    }

    impl Backend for FailsOn {
        fn name(&self) -> &str {
            "fails-on"
        }
        fn is_remote(&self) -> bool {
            true
        }
        fn chat(&self, req: &ChatRequest) -> Result<String, BackendError> {
            let current = req.user_content.rsplit(CURRENT_TEXT_HEADER).next().unwrap();
            if current.trim() == self.needle {
                return Err(BackendError::Status { status: 502, body: "bad gateway".into() });
            }
            MockBackend::default().chat(req)
        }
        fn embed(&self, _m: &str, _t: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
            unreachable!()
        }
    }

    fn failing_gateway(needle: &str) -> Gateway {
        Gateway::builder(Arc::new(FailsOn { needle: needle.into() }))
            .retry(RetryPolicy { max_retries: 1, base_delay_ms: 0 })
            .build()
            .unwrap()
    }

    #[test]
    fn one_failure_in_two_hundred_is_tolerated() {
        let gw = failing_gateway("a chunk 57.");
        let out = extract_corpus(&chunks(&[("a", 200)]), &gw, &ExtractionPrompt::default(), &settings()).unwrap();
        assert_eq!(out.chunks_failed, 1);
        let recorded: HashSet<usize> = out.records.iter().map(|r| r.chunk_index).collect();
        assert_eq!(recorded.len(), 199);
        assert!(!recorded.contains(&57));
        assert!(out.warnings.iter().any(|w| w.chunk_index == 57));
    }

    #[test]
    fn failure_ratio_above_threshold_aborts() {
        let gw = failing_gateway("a chunk 3.");
        let err = extract_corpus(&chunks(&[("a", 50)]), &gw, &ExtractionPrompt::default(), &settings()).unwrap_err();
        assert!(matches!(err, ExtractionError::TooManyFailures { failed: 1, total: 50, .. }));
    }

    #[test]
    fn parallel_and_serial_runs_agree() {
        let run = |n| {
            let gw = Gateway::builder(Arc::new(MockBackend::default())).parallelism(n).build().unwrap();
            extract_corpus(&chunks(&[("a", 7), ("b", 9)]), &gw, &ExtractionPrompt::default(), &settings()).unwrap()
        };
        assert_eq!(run(1), run(4));
    }
}
