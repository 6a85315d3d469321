//! Full-stop sentence segmentation.
//!
//! A sentence ends at a terminator character that is followed by whitespace or
//! by the end of the text. Only `.` terminates by default; the Greek ano
//! teleia (`·`) and question mark (`;`) are ordinary characters unless they are
//! added as extra terminators.

use std::ops::Range;

/// Sentence splitting rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceRules {
    terminators: Vec<char>,
}

impl Default for SentenceRules {
    fn default() -> Self {
        Self { terminators: vec!['.'] }
    }
}

impl SentenceRules {
    /// Full stop plus the given extra terminators.
    pub fn with_extra_terminators<I: IntoIterator<Item = char>>(extra: I) -> Self {
        let mut terminators = vec!['.'];
        for c in extra {
            if !terminators.contains(&c) {
                terminators.push(c);
            }
        }
        Self { terminators }
    }

    pub fn terminators(&self) -> &[char] {
        &self.terminators
    }

    fn is_terminator(&self, c: char) -> bool {
        self.terminators.contains(&c)
    }

    /// Byte ranges of each sentence in `text`.
    ///
    /// Ranges are trimmed of surrounding whitespace, ordered and disjoint; every
    /// byte outside them is whitespace. A whitespace-only text has no sentences.
    pub fn spans(&self, text: &str) -> Vec<Range<usize>> {
        let mut spans = Vec::new();
        let mut start: Option<usize> = None;
        let mut chars = text.char_indices().peekable();
        while let Some((i, c)) = chars.next() {
            if start.is_none() {
                if c.is_whitespace() {
                    continue;
                }
                start = Some(i);
            }
            if self.is_terminator(c) {
                let boundary = match chars.peek() {
                    None => true,
                    Some(&(_, next)) => next.is_whitespace(),
                };
                if boundary {
                    let end = i + c.len_utf8();
                    spans.push(start.take().unwrap_or(i)..end);
                }
            }
        }
        if let Some(s) = start {
            let end = s + text[s..].trim_end().len();
            spans.push(s..end);
        }
        spans
    }

    pub fn split<'a>(&self, text: &'a str) -> Vec<&'a str> {
        self.spans(text).into_iter().map(|r| &text[r]).collect()
    }
}

/// Splits `text` at full stops followed by whitespace or end-of-text.
pub fn split_sentences(text: &str) -> Vec<&str> {
    SentenceRules::default().split(text)
}
