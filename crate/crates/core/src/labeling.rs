//! One short natural-language label per motif cluster.
//!
//! A chat model summarizes the members nearest the cluster centroid. When the
//! backend fails the medoid sentence stands in as the label.

use serde::{Deserialize, Serialize};

use crate::clustering::{cosine_distance, EmbeddingMatrix, MotifCatalog};
use crate::corpus::SentenceRules;
use crate::digest::sha256_hex;
use crate::extraction::MotifRecord;
use crate::gateway::{ChatRequest, Gateway};

pub const MEMBERS_SLOT: &str = "{members}";

pub const LABEL_SYSTEM_PROMPT: &str = "You summarize lists of literary motif sentences into one concise umbrella motif sentence. Reply with the sentence only.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelRequestSpec {
    pub model: String,
    pub k_representatives: usize,
    pub max_label_words: usize,
    pub system_prompt: String,
    /// User message; `{members}` is replaced by the numbered member list.
    pub prompt_template: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for LabelRequestSpec {
    fn default() -> Self {
        Self {
            model: "mock-labeler".into(),
            k_representatives: 20,
            max_label_words: 30,
            system_prompt: LABEL_SYSTEM_PROMPT.into(),
            prompt_template: MEMBERS_SLOT.into(),
            temperature: 0.0,
            max_output_tokens: 128,
        }
    }
}

impl LabelRequestSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.k_representatives < 1 {
            return Err("k_representatives must be at least 1".into());
        }
        if self.max_label_words < 1 {
            return Err("max_label_words must be at least 1".into());
        }
        let slots = self.prompt_template.matches(MEMBERS_SLOT).count();
        if slots != 1 {
            return Err(format!("prompt_template must contain {MEMBERS_SLOT} exactly once, found {slots}"));
        }
        Ok(())
    }

    /// Digest over everything that shapes the request.
    pub fn checksum(&self) -> String {
        sha256_hex(format!("{}\u{0}{}", self.system_prompt, self.prompt_template))
    }

    pub fn build_request(&self, members: &[&str]) -> ChatRequest {
        let list =
            members.iter().enumerate().map(|(i, m)| format!("{}. {}", i + 1, m.trim())).collect::<Vec<_>>().join("\n");
        ChatRequest {
            model: self.model.clone(),
            system_prompt: self.system_prompt.clone(),
            user_content: self.prompt_template.replacen(MEMBERS_SLOT, &list, 1),
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
        }
    }
}

/// The `k` members closest to the cluster centroid by cosine distance, ties
/// by lower record index.
pub fn representatives(members: &[usize], embeddings: &EmbeddingMatrix, k: usize) -> Vec<usize> {
    if members.is_empty() {
        return Vec::new();
    }
    let mut centroid = vec![0.0; embeddings.dim()];
    for &m in members {
        for (c, x) in centroid.iter_mut().zip(embeddings.row(m)) {
            *c += x;
        }
    }
    centroid.iter_mut().for_each(|c| *c /= members.len() as f64);
    let mut scored: Vec<(f64, usize)> =
        members.iter().map(|&m| (cosine_distance(embeddings.row(m), &centroid), m)).collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(k).map(|(_, m)| m).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterLabel {
    pub label: String,
    pub fallback: bool,
    pub truncated: bool,
}

/// Cuts a reply down to its first sentence when it runs past `max_words` or
/// holds more than one sentence, then hard-caps the word count.
pub fn tidy_label(reply: &str, max_words: usize) -> (String, bool) {
    let flat = reply.split_whitespace().collect::<Vec<_>>().join(" ");
    let sentences = SentenceRules::default().split(&flat);
    let first = sentences.first().copied().unwrap_or("");
    let mut truncated = sentences.len() > 1;
    let words: Vec<&str> = first.split_whitespace().collect();
    let label = if words.len() > max_words {
        truncated = true;
        words[..max_words].join(" ")
    } else {
        first.to_string()
    };
    (label, truncated)
}

pub fn summarize_cluster(members: &[&str], medoid: &str, gateway: &Gateway, spec: &LabelRequestSpec) -> ClusterLabel {
    let fallback = |why: &str| {
        tracing::warn!(reason = why, "label fell back to medoid sentence");
        ClusterLabel { label: medoid.to_string(), fallback: true, truncated: false }
    };
    match gateway.chat_complete(&spec.build_request(members)) {
        Ok(reply) => {
            let (label, truncated) = tidy_label(&reply, spec.max_label_words);
            if label.is_empty() {
                fallback("empty reply")
            } else {
                ClusterLabel { label, fallback: false, truncated }
            }
        }
        Err(e) => fallback(&e.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCatalog {
    pub catalog: MotifCatalog,
    pub label_model: String,
    pub label_prompt_sha256: String,
}

/// Labels every cluster; the catalog is updated only after all replies are in.
pub fn label_all(
    catalog: &MotifCatalog,
    records: &[MotifRecord],
    embeddings: &EmbeddingMatrix,
    gateway: &Gateway,
    spec: &LabelRequestSpec,
) -> LabeledCatalog {
    let labels = gateway.par_map(&catalog.clusters, |cluster| {
        let reps = representatives(&cluster.member_records, embeddings, spec.k_representatives);
        let sentences: Vec<&str> = reps.iter().map(|&r| records[r].sentence.as_str()).collect();
        summarize_cluster(&sentences, &cluster.medoid_sentence, gateway, spec)
    });
    let mut out = catalog.clone();
    for (cluster, l) in out.clusters.iter_mut().zip(labels) {
        cluster.label = Some(l.label);
        cluster.label_is_fallback = l.fallback;
        cluster.label_truncated = l.truncated;
    }
    LabeledCatalog { catalog: out, label_model: spec.model.clone(), label_prompt_sha256: spec.checksum() }
}
