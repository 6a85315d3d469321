//! Offline backend: every reply is a pure function of the request.

use std::collections::BTreeMap;

use super::{Backend, BackendError, ChatRequest};
use crate::digest::Sha256Writer;
use crate::extraction::CURRENT_TEXT_HEADER;

/// Motif families the mock draws from, each with a few phrasings so that
/// clusters contain near-duplicates rather than exact copies.
const MOTIF_FAMILIES: &[(&str, &[&str])] = &[
    ("Transition from day to night", &["", " brings unease", " at the palace", " over the sea"]),
    ("A maiden's beauty captivates onlookers", &["", " at a festival", " in the garden", " of the city"]),
    ("Fate overturns human plans", &["", " without warning", " at sea", " once again"]),
    ("Lovers swear oaths of fidelity", &["", " before the gods", " in secret", " at parting"]),
    ("Captives are held against their will", &["", " by pirates", " in a tower", " in chains"]),
    ("Grief over the loss of a loved one", &["", " at a tomb", " in solitude", " among friends"]),
    ("A ruler is moved by a stranger", &["", " at court", " during a feast", " in the city"]),
    ("A garden full of beauty and pleasure", &["", " in spring", " with flowing water", " behind walls"]),
];

pub const MOCK_EMBEDDING_DIM: usize = 8;

#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    canned: BTreeMap<String, String>,
}

impl MockBackend {
    /// Replies with `completion` whenever the user content equals `user_content`.
    pub fn with_canned(mut self, user_content: impl Into<String>, completion: impl Into<String>) -> Self {
        self.canned.insert(user_content.into(), completion.into());
        self
    }

    pub fn with_canned_table(mut self, table: BTreeMap<String, String>) -> Self {
        self.canned.extend(table);
        self
    }

    fn digest(parts: &[&str]) -> [u8; 32] {
        let mut h = Sha256Writer::new();
        for p in parts {
            h.field(p);
        }
        let hex = h.finish_hex();
        let mut out = [0u8; 32];
        hex::decode_to_slice(hex, &mut out).expect("sha256 hex");
        out
    }

    /// Three distinct motifs picked from the digest of the current-text block.
    fn synthesize_motifs(user_content: &str) -> String {
        let current = user_content.rsplit_once(CURRENT_TEXT_HEADER).map_or(user_content, |(_, tail)| tail);
        let d = Self::digest(&[current.trim()]);
        let mut picked: Vec<usize> = Vec::with_capacity(3);
        let fallback = 0..MOTIF_FAMILIES.len();
        for family in d.iter().map(|&b| b as usize % MOTIF_FAMILIES.len()).chain(fallback) {
            if picked.len() == 3 {
                break;
            }
            if !picked.contains(&family) {
                picked.push(family);
            }
        }
        picked
            .iter()
            .enumerate()
            .map(|(n, &f)| {
                let (base, variants) = MOTIF_FAMILIES[f];
                let variant = variants[d[16 + n] as usize % variants.len()];
                format!("{}. {base}{variant}.", n + 1)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Summarization requests carry a numbered list; the mock echoes its first item.
    fn first_listed_item(user_content: &str) -> Option<String> {
        user_content.lines().find_map(|line| {
            let rest = line.trim().strip_prefix("1.")?;
            Some(rest.trim().to_string())
        })
    }

    pub fn embed_text(text: &str) -> Vec<f64> {
        let mut v = vec![0.0f64; MOCK_EMBEDDING_DIM];
        let lowered = text.to_lowercase();
        for word in lowered.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
            let d = Self::digest(&[word]);
            let bucket = d[0] as usize % MOCK_EMBEDDING_DIM;
            let sign = if d[1] & 1 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign * (1.0 + d[2] as f64 / 255.0);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            let d = Self::digest(&[text]);
            v[d[0] as usize % MOCK_EMBEDDING_DIM] = 1.0;
            return v;
        }
        v.iter().map(|x| x / norm).collect()
    }
}

impl Backend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn is_remote(&self) -> bool {
        false
    }

    fn chat(&self, req: &ChatRequest) -> Result<String, BackendError> {
        if let Some(reply) = self.canned.get(&req.user_content) {
            return Ok(reply.clone());
        }
        if let Some(first) = Self::first_listed_item(&req.user_content) {
            return Ok(first);
        }
        Ok(Self::synthesize_motifs(&req.user_content))
    }

    fn embed(&self, _model: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        Ok(texts.iter().map(|t| Self::embed_text(t)).collect())
    }
}
