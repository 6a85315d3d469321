//! Tolerant parsing of the model's motif list.
//!
//! Accepted shapes: numbered lists (`1. ...`, `2) ...`), bulleted or plain
//! newline-separated sentences, and period-separated run-ons such as
//! `Motifs: A. B. C.`. Every line is also split at full stops, so a numbered
//! item holding two sentences yields two motifs.

use std::collections::HashSet;

use crate::corpus::SentenceRules;

const BULLETS: &[char] = &['-', '*', '•', '–', '—', '+'];
const LIST_LABELS: &[&str] = &["motifs:", "motif:", "literary motifs:"];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedMotifs {
    pub sentences: Vec<String>,
    /// Set when a non-blank completion yielded no motif at all.
    pub warning: Option<String>,
}

pub fn parse_motif_list(completion: &str) -> Vec<String> {
    parse_completion(completion).sentences
}

pub fn parse_completion(completion: &str) -> ParsedMotifs {
    let rules = SentenceRules::default();
    let mut sentences: Vec<String> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for line in completion.lines() {
        for piece in rules.split(line) {
            let cleaned = clean_item(piece, sentences.is_empty());
            if cleaned.is_empty() || !cleaned.chars().any(char::is_alphanumeric) {
                continue;
            }
            if seen.insert(cleaned.to_string()) {
                sentences.push(cleaned.to_string());
            }
        }
    }
    let warning = (sentences.is_empty() && !completion.trim().is_empty()).then(|| {
        let preview: String = completion.chars().take(80).collect();
        format!("no motif sentences found in completion {preview:?}")
    });
    ParsedMotifs { sentences, warning }
}

/// Strips list numbering, bullets and (for the first item) a leading
/// `Motifs:` label until nothing more can be removed.
fn clean_item(piece: &str, first: bool) -> &str {
    let mut s = piece.trim();
    loop {
        let before = s;
        s = strip_numbering(s).trim_start();
        if let Some(rest) = s.strip_prefix(BULLETS) {
            s = rest.trim_start();
        }
        if first {
            for label in LIST_LABELS {
                if s.len() >= label.len()
                    && s.is_char_boundary(label.len())
                    && s[..label.len()].eq_ignore_ascii_case(label)
                {
                    s = s[label.len()..].trim_start();
                }
            }
        }
        s = s.trim();
        if s == before {
            return s;
        }
    }
}

/// `12.`, `12)` or `(12)` followed by whitespace or end of item.
fn strip_numbering(s: &str) -> &str {
    let (body, paren) = match s.strip_prefix('(') {
        Some(rest) => (rest, true),
        None => (s, false),
    };
    let digits = body.len() - body.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits == 0 {
        return s;
    }
    let rest = &body[digits..];
    let after = if paren { rest.strip_prefix(')') } else { rest.strip_prefix(['.', ')', ':']) };
    match after {
        Some(tail) if tail.is_empty() || tail.starts_with(char::is_whitespace) => tail,
        _ => s,
    }
}
