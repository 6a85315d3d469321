//! Corpus loading, sentence segmentation and chunking.

mod chunk;
mod sentences;
mod tokenize;

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use chunk::{chunk_novel, context_for, Chunk, ChunkContext, CONTEXT_SEPARATOR, CONTEXT_WINDOW};
pub use sentences::{split_sentences, SentenceRules};
pub use tokenize::{
    count_tokens, counter_by_name, registered_counters, TokenCounter, TokenizerSpec, UnicodeWords, Whitespace,
    DEFAULT_MAX_TOKENS, DEFAULT_TOKENIZER,
};

use crate::digest::Sha256Writer;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid corpus manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("duplicate novel id {0:?}")]
    DuplicateId(String),
    #[error("novel {id:?}: unknown period {value:?} (expected Imperial, Komnenian or Palaiologan)")]
    UnknownPeriod { id: String, value: String },
    #[error("novel {id:?}: {path} is not valid UTF-8")]
    InvalidEncoding { id: String, path: PathBuf },
    #[error("novel {id:?}: text file {path} is empty")]
    EmptyText { id: String, path: PathBuf },
    #[error("unknown tokenizer {0:?}")]
    UnknownTokenizer(String),
    #[error("max_tokens must be at least 1")]
    InvalidMaxTokens,
    #[error("chunk index {index} out of range for {len} chunks")]
    ChunkIndexOutOfRange { index: usize, len: usize },
}

/// Historical sub-corpus a novel belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Period {
    Imperial,
    Komnenian,
    Palaiologan,
}

impl Period {
    pub const ALL: [Period; 3] = [Period::Imperial, Period::Komnenian, Period::Palaiologan];

    pub fn as_str(self) -> &'static str {
        match self {
            Period::Imperial => "Imperial",
            Period::Komnenian => "Komnenian",
            Period::Palaiologan => "Palaiologan",
        }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Period {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Period::ALL.into_iter().find(|p| p.as_str().eq_ignore_ascii_case(s.trim())).ok_or_else(|| s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Novel {
    pub id: String,
    pub title: String,
    pub period: Period,
    pub author: Option<String>,
    pub text: String,
}

/// Identity and period of a novel without its text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NovelMeta {
    pub id: String,
    pub title: String,
    pub period: Period,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author: Option<String>,
}

impl From<&Novel> for NovelMeta {
    fn from(n: &Novel) -> Self {
        Self { id: n.id.clone(), title: n.title.clone(), period: n.period, author: n.author.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub novels: Vec<Novel>,
}

impl Corpus {
    pub fn new(novels: Vec<Novel>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for n in &novels {
            if !seen.insert(n.id.as_str()) {
                return Err(CorpusError::DuplicateId(n.id.clone()));
            }
        }
        Ok(Self { novels })
    }

    pub fn len(&self) -> usize {
        self.novels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.novels.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Novel> {
        self.novels.iter().find(|n| n.id == id)
    }

    /// Periods present in the corpus, in chronological order.
    pub fn periods(&self) -> Vec<Period> {
        Period::ALL.into_iter().filter(|p| self.novels.iter().any(|n| n.period == *p)).collect()
    }

    pub fn metas(&self) -> Vec<NovelMeta> {
        self.novels.iter().map(NovelMeta::from).collect()
    }

    /// SHA-256 over every novel's metadata and text, in manifest order.
    pub fn digest(&self) -> String {
        let mut h = Sha256Writer::new();
        for n in &self.novels {
            h.field(&n.id);
            h.field(&n.title);
            h.field(n.period.as_str());
            h.field(n.author.as_deref().unwrap_or(""));
            h.field(&n.text);
        }
        h.finish_hex()
    }

    /// Chunks every novel; output is grouped by novel in corpus order.
    pub fn chunk(&self, spec: &TokenizerSpec, rules: &SentenceRules) -> Result<Vec<Chunk>, CorpusError> {
        spec.validate()?;
        let per_novel: Result<Vec<Vec<Chunk>>, CorpusError> =
            self.novels.par_iter().map(|n| chunk_novel(n, spec, rules)).collect();
        Ok(per_novel?.into_iter().flatten().collect())
    }
}

/// Builds every chunk's context window. Chunks must be grouped by novel with
/// ascending indices, as produced by [`Corpus::chunk`].
pub fn contexts(chunks: &[Chunk]) -> Vec<ChunkContext> {
    let mut out = Vec::with_capacity(chunks.len());
    let mut start = 0;
    while start < chunks.len() {
        let id = &chunks[start].novel_id;
        let end = start + chunks[start..].iter().take_while(|c| &c.novel_id == id).count();
        let group = &chunks[start..end];
        for i in 0..group.len() {
            out.push(context_for(group, i).expect("index within group"));
        }
        start = end;
    }
    out
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    #[serde(default)]
    novel: Vec<ManifestEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    id: String,
    title: String,
    period: String,
    #[serde(default)]
    author: Option<String>,
    path: PathBuf,
}

/// Loads a TOML corpus manifest. Text paths are resolved relative to the
/// manifest's directory.
///
/// ```toml
/// [[novel]]
/// id = "callirhoe"
/// title = "Callirhoe"
/// period = "Imperial"
/// author = "Chariton"
/// path = "texts/callirhoe.txt"
/// ```
pub fn load_corpus(manifest_path: &Path) -> Result<Corpus, CorpusError> {
    let raw = std::fs::read_to_string(manifest_path)
        .map_err(|source| CorpusError::Io { path: manifest_path.to_path_buf(), source })?;
    let manifest: ManifestFile = toml::from_str(&raw)
        .map_err(|e| CorpusError::Manifest { path: manifest_path.to_path_buf(), message: e.to_string() })?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let mut seen = HashSet::new();
    let mut novels = Vec::with_capacity(manifest.novel.len());
    for entry in manifest.novel {
        if !seen.insert(entry.id.clone()) {
            return Err(CorpusError::DuplicateId(entry.id));
        }
        let period =
            entry.period.parse().map_err(|value| CorpusError::UnknownPeriod { id: entry.id.clone(), value })?;
        let path = base.join(&entry.path);
        let bytes = std::fs::read(&path).map_err(|source| CorpusError::Io { path: path.clone(), source })?;
        let text = String::from_utf8(bytes)
            .map_err(|_| CorpusError::InvalidEncoding { id: entry.id.clone(), path: path.clone() })?;
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyText { id: entry.id, path });
        }
        novels.push(Novel { id: entry.id, title: entry.title, period, author: entry.author, text });
    }
    if novels.is_empty() {
        return Err(CorpusError::Manifest {
            path: manifest_path.to_path_buf(),
            message: "no [[novel]] entries".into(),
        });
    }
    Corpus::new(novels)
}
