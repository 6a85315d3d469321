//! Published pair-similarity listings of the form
//! `Title A and Title B: similarity 0.81`.
//!
//! Titles may themselves contain " and ", so the split point of each line is
//! inferred: titles seen on lines with a single " and " seed a set of known
//! titles, and a line is resolved once exactly one split has a known title on
//! at least one side. Resolution repeats until nothing changes.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::network::NetworkNode;
use super::SimilarityMatrix;

const MARKER: &str = ": similarity ";
const JOINER: &str = " and ";

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FixtureError {
    #[error("line {line}: cannot read similarity value {value:?}")]
    BadValue { line: usize, value: String },
    #[error("line {line}: no \" and \" separating two titles in {text:?}")]
    NoSeparator { line: usize, text: String },
    #[error("line {line}: cannot tell where the first title ends in {text:?}")]
    Unresolved { line: usize, text: String },
    #[error("no pair lines found")]
    Empty,
    #[error("listing is incomplete: {0}")]
    Incomplete(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub a: String,
    pub b: String,
    pub similarity: f64,
    /// 1-based line number in the source text.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairListing {
    /// Titles in order of first appearance.
    pub titles: Vec<String>,
    /// Pairs in listing order.
    pub pairs: Vec<PairScore>,
}

fn split_points(text: &str) -> Vec<usize> {
    text.match_indices(JOINER).map(|(i, _)| i).collect()
}

pub fn parse_similarity_listing(text: &str, known_titles: &[&str]) -> Result<PairListing, FixtureError> {
    let mut raw: Vec<(usize, String, f64)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let Some((names, value)) = line.trim().rsplit_once(MARKER) else { continue };
        let similarity: f64 =
            value.trim().parse().map_err(|_| FixtureError::BadValue { line: line_no, value: value.to_string() })?;
        if !similarity.is_finite() {
            return Err(FixtureError::BadValue { line: line_no, value: value.to_string() });
        }
        if split_points(names).is_empty() {
            return Err(FixtureError::NoSeparator { line: line_no, text: names.to_string() });
        }
        raw.push((line_no, names.to_string(), similarity));
    }
    if raw.is_empty() {
        return Err(FixtureError::Empty);
    }

    let mut known: HashSet<String> = known_titles.iter().map(|t| t.to_string()).collect();
    for (_, names, _) in &raw {
        if let [at] = split_points(names)[..] {
            known.insert(names[..at].to_string());
            known.insert(names[at + JOINER.len()..].to_string());
        }
    }
    let mut resolved: Vec<Option<(String, String)>> = vec![None; raw.len()];
    loop {
        let mut progress = false;
        for (slot, (_, names, _)) in resolved.iter_mut().zip(&raw) {
            if slot.is_some() {
                continue;
            }
            let splits: Vec<(&str, &str)> =
                split_points(names).into_iter().map(|at| (&names[..at], &names[at + JOINER.len()..])).collect();
            let both: Vec<_> = splits.iter().filter(|(a, b)| known.contains(*a) && known.contains(*b)).collect();
            let either: Vec<_> = splits.iter().filter(|(a, b)| known.contains(*a) || known.contains(*b)).collect();
            let pick = match (both.as_slice(), either.as_slice()) {
                ([one], _) => Some(**one),
                ([], [one]) => Some(**one),
                _ => None,
            };
            if let Some((a, b)) = pick {
                known.insert(a.to_string());
                known.insert(b.to_string());
                *slot = Some((a.to_string(), b.to_string()));
                progress = true;
            }
        }
        if !progress {
            break;
        }
    }

    let mut titles: Vec<String> = Vec::new();
    let mut pairs = Vec::with_capacity(raw.len());
    for ((line, names, similarity), slot) in raw.into_iter().zip(resolved) {
        let Some((a, b)) = slot else {
            return Err(FixtureError::Unresolved { line, text: names });
        };
        for t in [&a, &b] {
            if !titles.contains(t) {
                titles.push(t.clone());
            }
        }
        pairs.push(PairScore { a, b, similarity, line });
    }
    Ok(PairListing { titles, pairs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListingReport {
    pub novels: usize,
    pub pairs: usize,
    pub expected_pairs: usize,
    pub min: f64,
    pub max: f64,
    /// Lines whose score exceeds the line before.
    pub ordering_violations: Vec<usize>,
    /// Lines with a score outside [0, 1].
    pub out_of_range: Vec<usize>,
    /// Lines repeating an earlier pair, in either order.
    pub duplicates: Vec<usize>,
    /// Lines pairing a title with itself.
    pub self_pairs: Vec<usize>,
    pub missing_pairs: Vec<(String, String)>,
}

impl ListingReport {
    pub fn is_ok(&self) -> bool {
        self.pairs == self.expected_pairs
            && self.ordering_violations.is_empty()
            && self.out_of_range.is_empty()
            && self.duplicates.is_empty()
            && self.self_pairs.is_empty()
            && self.missing_pairs.is_empty()
    }
}

pub fn verify_pair_listing(listing: &PairListing) -> ListingReport {
    let n = listing.titles.len();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut report = ListingReport {
        novels: n,
        pairs: listing.pairs.len(),
        expected_pairs: n * n.saturating_sub(1) / 2,
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
        ordering_violations: Vec::new(),
        out_of_range: Vec::new(),
        duplicates: Vec::new(),
        self_pairs: Vec::new(),
        missing_pairs: Vec::new(),
    };
    let mut previous: Option<f64> = None;
    for p in &listing.pairs {
        report.min = report.min.min(p.similarity);
        report.max = report.max.max(p.similarity);
        if previous.is_some_and(|prev| p.similarity > prev) {
            report.ordering_violations.push(p.line);
        }
        previous = Some(p.similarity);
        if !(0.0..=1.0).contains(&p.similarity) {
            report.out_of_range.push(p.line);
        }
        if p.a == p.b {
            report.self_pairs.push(p.line);
        }
        let key = if p.a <= p.b { (p.a.clone(), p.b.clone()) } else { (p.b.clone(), p.a.clone()) };
        if !seen.insert(key) {
            report.duplicates.push(p.line);
        }
    }
    let ordered: BTreeSet<&String> = listing.titles.iter().collect();
    let ordered: Vec<&String> = ordered.into_iter().collect();
    for (i, a) in ordered.iter().enumerate() {
        for b in &ordered[i + 1..] {
            if !seen.contains(&((*a).clone(), (*b).clone())) {
                report.missing_pairs.push(((*a).clone(), (*b).clone()));
            }
        }
    }
    report
}

impl PairListing {
    /// Dense symmetric matrix in title order. Every pair must be present.
    pub fn to_similarity(&self) -> Result<SimilarityMatrix, FixtureError> {
        let index: HashMap<&str, usize> = self.titles.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        let n = self.titles.len();
        let mut sim = vec![vec![f64::NAN; n]; n];
        for (i, row) in sim.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for p in &self.pairs {
            let (i, j) = (index[p.a.as_str()], index[p.b.as_str()]);
            sim[i][j] = p.similarity;
            sim[j][i] = p.similarity;
        }
        for (i, row) in sim.iter().enumerate() {
            if let Some(j) = row.iter().position(|x| x.is_nan()) {
                return Err(FixtureError::Incomplete(format!(
                    "no score for {} and {}",
                    self.titles[i], self.titles[j]
                )));
            }
        }
        Ok(SimilarityMatrix { ids: self.titles.clone(), sim })
    }

    pub fn nodes(&self) -> Vec<NetworkNode> {
        self.titles.iter().map(|t| NetworkNode { id: t.clone(), title: t.clone(), period: None }).collect()
    }
}
