use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use super::CorpusError;

pub const DEFAULT_TOKENIZER: &str = "unicode-words";
pub const DEFAULT_MAX_TOKENS: usize = 1000;

/// Counts tokens in a piece of text. Implementations must be deterministic.
pub trait TokenCounter: Send + Sync {
    fn name(&self) -> &'static str;
    fn count(&self, text: &str) -> usize;
}

/// Unicode word-boundary segmentation; every non-whitespace segment (a word
/// or a single punctuation mark) is one token.
#[derive(Debug, Default, Clone, Copy)]
pub struct UnicodeWords;

impl TokenCounter for UnicodeWords {
    fn name(&self) -> &'static str {
        "unicode-words"
    }

    fn count(&self, text: &str) -> usize {
        text.split_word_bounds().filter(|seg| !seg.chars().all(char::is_whitespace)).count()
    }
}

/// Whitespace-separated runs.
#[derive(Debug, Default, Clone, Copy)]
pub struct Whitespace;

impl TokenCounter for Whitespace {
    fn name(&self) -> &'static str {
        "whitespace"
    }

    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

pub fn registered_counters() -> &'static [&'static str] {
    &["unicode-words", "whitespace"]
}

pub fn counter_by_name(name: &str) -> Result<Box<dyn TokenCounter>, CorpusError> {
    match name {
        "unicode-words" => Ok(Box::new(UnicodeWords)),
        "whitespace" => Ok(Box::new(Whitespace)),
        other => Err(CorpusError::UnknownTokenizer(other.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenizerSpec {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
}

fn default_name() -> String {
    DEFAULT_TOKENIZER.to_string()
}

fn default_max_tokens() -> usize {
    DEFAULT_MAX_TOKENS
}

impl Default for TokenizerSpec {
    fn default() -> Self {
        Self { name: default_name(), max_tokens: DEFAULT_MAX_TOKENS }
    }
}

impl TokenizerSpec {
    pub fn new(name: impl Into<String>, max_tokens: usize) -> Self {
        Self { name: name.into(), max_tokens }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.max_tokens == 0 {
            return Err(CorpusError::InvalidMaxTokens);
        }
        counter_by_name(&self.name).map(|_| ())
    }

    pub fn counter(&self) -> Result<Box<dyn TokenCounter>, CorpusError> {
        self.validate()?;
        counter_by_name(&self.name)
    }
}

pub fn count_tokens(text: &str, spec: &TokenizerSpec) -> Result<usize, CorpusError> {
    Ok(spec.counter()?.count(text))
}
