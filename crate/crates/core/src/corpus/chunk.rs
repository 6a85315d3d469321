use serde::{Deserialize, Serialize};

use super::sentences::SentenceRules;
use super::tokenize::{TokenCounter, TokenizerSpec};
use super::{CorpusError, Novel};

/// Separator placed between the preceding chunks of a context window.
pub const CONTEXT_SEPARATOR: &str = "\n";

/// Number of preceding chunks given to the model as context.
pub const CONTEXT_WINDOW: usize = 2;

/// A sentence-aligned block of one novel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub novel_id: String,
    pub index: usize,
    pub token_count: usize,
    /// Inclusive `[first, last]` sentence ordinals.
    pub sentence_span: [usize; 2],
    /// Set when a single sentence is longer than the token budget.
    #[serde(default)]
    pub oversized_sentence: bool,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkContext {
    pub chunk: Chunk,
    pub context_text: String,
}

/// Packs sentences greedily: a sentence joins the open chunk only if the
/// chunk's token count stays within `max_tokens`.
pub fn chunk_novel(novel: &Novel, spec: &TokenizerSpec, rules: &SentenceRules) -> Result<Vec<Chunk>, CorpusError> {
    let counter = spec.counter()?;
    Ok(chunk_text(&novel.id, &novel.text, counter.as_ref(), spec.max_tokens, rules))
}

pub(crate) fn chunk_text(
    novel_id: &str,
    text: &str,
    counter: &dyn TokenCounter,
    max_tokens: usize,
    rules: &SentenceRules,
) -> Vec<Chunk> {
    let spans = rules.spans(text);
    let mut chunks = Vec::new();
    // (first sentence, last sentence, token count) of the chunk being filled
    let mut open: Option<(usize, usize, usize)> = None;

    let mut close = |first: usize, last: usize, tokens: usize, oversized: bool| {
        chunks.push(Chunk {
            novel_id: novel_id.to_string(),
            index: chunks.len(),
            token_count: tokens,
            sentence_span: [first, last],
            oversized_sentence: oversized,
            text: text[spans[first].start..spans[last].end].to_string(),
        });
    };

    for (s, span) in spans.iter().enumerate() {
        if let Some((first, last, tokens)) = open {
            let extended = counter.count(&text[spans[first].start..span.end]);
            if extended <= max_tokens {
                open = Some((first, s, extended));
                continue;
            }
            close(first, last, tokens, false);
            open = None;
        }
        let alone = counter.count(&text[span.clone()]);
        if alone > max_tokens {
            close(s, s, alone, true);
        } else {
            open = Some((s, s, alone));
        }
    }
    if let Some((first, last, tokens)) = open {
        close(first, last, tokens, false);
    }
    chunks
}

/// The chunk at `index` together with up to two preceding chunks, oldest first.
pub fn context_for(chunks: &[Chunk], index: usize) -> Result<ChunkContext, CorpusError> {
    let chunk = chunks.get(index).ok_or(CorpusError::ChunkIndexOutOfRange { index, len: chunks.len() })?;
    let from = index.saturating_sub(CONTEXT_WINDOW);
    let context_text = chunks[from..index].iter().map(|c| c.text.as_str()).collect::<Vec<_>>().join(CONTEXT_SEPARATOR);
    Ok(ChunkContext { chunk: chunk.clone(), context_text })
}
