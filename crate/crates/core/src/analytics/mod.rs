//! Novel × motif statistics.
//!
//! Everything here is a pure function of the count matrix. Counts stay
//! integral until the final division so that ratios of equal integers come
//! out exactly equal.

mod fixture;
mod network;
mod similarity;
mod uniqueness;

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

pub use fixture::{parse_similarity_listing, verify_pair_listing, FixtureError, ListingReport, PairListing, PairScore};
pub use network::{network_export, NetworkDocument, NetworkLink, NetworkNode};
pub use similarity::{similarity_matrix, RankedPair, SimilarityMatrix};
pub use uniqueness::{uniqueness_scores, UniqueMotif, UniquenessTable};

use crate::clustering::MotifCatalog;
use crate::corpus::{NovelMeta, Period};
use crate::extraction::MotifRecord;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AnalyticsError {
    #[error("record {index} names unknown novel {novel_id:?}")]
    UnknownNovel { index: usize, novel_id: String },
    #[error("catalog covers {catalog} records but {given} were given")]
    RecordCount { catalog: usize, given: usize },
    #[error("period {0} has no clustered records")]
    EmptyPeriod(Period),
    #[error("novel {0:?} has no clustered records, so its similarity is undefined")]
    ZeroRow(String),
    #[error("the matrix holds no clustered records")]
    EmptyMatrix,
    #[error("network threshold {0} is outside [0, 1]")]
    Threshold(f64),
    #[error("no novel belongs to period {0}")]
    PeriodWithoutNovels(Period),
}

/// Whether repeated motifs within one chunk count once or every time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    #[default]
    Records,
    DistinctPerChunk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdDevMode {
    /// Divide by the number of periods.
    #[default]
    Population,
    /// Divide by the number of periods minus one.
    Sample,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotifColumn {
    pub cluster_id: usize,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotifMatrix {
    pub novels: Vec<NovelMeta>,
    pub motifs: Vec<MotifColumn>,
    /// `counts[novel][motif]`.
    pub counts: Vec<Vec<u64>>,
}

impl MotifMatrix {
    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.motifs.len()];
        for row in &self.counts {
            for (acc, c) in out.iter_mut().zip(row) {
                *acc += c;
            }
        }
        out
    }

    pub fn grand_total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn label(&self, m: usize) -> String {
        let col = &self.motifs[m];
        col.label.clone().unwrap_or_else(|| format!("Motif {}", col.cluster_id))
    }
}

/// Tallies clustered records per novel and motif. Outliers are skipped.
/// Rows follow `novels`, columns follow the catalog's cluster order.
pub fn build_motif_matrix(
    records: &[MotifRecord],
    catalog: &MotifCatalog,
    novels: &[NovelMeta],
    mode: CountMode,
) -> Result<MotifMatrix, AnalyticsError> {
    if records.len() != catalog.record_count {
        return Err(AnalyticsError::RecordCount { catalog: catalog.record_count, given: records.len() });
    }
    let row_of: HashMap<&str, usize> = novels.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    for (index, r) in records.iter().enumerate() {
        if !row_of.contains_key(r.novel_id.as_str()) {
            return Err(AnalyticsError::UnknownNovel { index, novel_id: r.novel_id.clone() });
        }
    }
    let mut counts = vec![vec![0u64; catalog.clusters.len()]; novels.len()];
    let mut seen: HashSet<(&str, usize, usize)> = HashSet::new();
    for (col, cluster) in catalog.clusters.iter().enumerate() {
        for &ri in &cluster.member_records {
            let r = &records[ri];
            if mode == CountMode::DistinctPerChunk && !seen.insert((r.novel_id.as_str(), r.chunk_index, col)) {
                continue;
            }
            counts[row_of[r.novel_id.as_str()]][col] += 1;
        }
    }
    Ok(MotifMatrix {
        novels: novels.to_vec(),
        motifs: catalog
            .clusters
            .iter()
            .map(|c| MotifColumn { cluster_id: c.cluster_id, label: c.label.clone() })
            .collect(),
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodFreqTable {
    pub periods: Vec<Period>,
    /// Clustered records per period.
    pub totals: Vec<u64>,
    /// `rel_freq[period][motif]`.
    pub rel_freq: Vec<Vec<f64>>,
}

/// Per-period share of each motif among that period's clustered records.
pub fn period_relative_frequencies(
    matrix: &MotifMatrix,
    periods: &[Period],
) -> Result<PeriodFreqTable, AnalyticsError> {
    let rows = matrix.row_sums();
    let mut totals = Vec::with_capacity(periods.len());
    let mut rel_freq = Vec::with_capacity(periods.len());
    for &p in periods {
        let members: Vec<usize> = (0..matrix.novels.len()).filter(|&n| matrix.novels[n].period == p).collect();
        if members.is_empty() {
            return Err(AnalyticsError::PeriodWithoutNovels(p));
        }
        let total: u64 = members.iter().map(|&n| rows[n]).sum();
        if total == 0 {
            return Err(AnalyticsError::EmptyPeriod(p));
        }
        let freqs = (0..matrix.motifs.len())
            .map(|m| members.iter().map(|&n| matrix.counts[n][m]).sum::<u64>() as f64 / total as f64)
            .collect();
        totals.push(total);
        rel_freq.push(freqs);
    }
    Ok(PeriodFreqTable { periods: periods.to_vec(), totals, rel_freq })
}

impl PeriodFreqTable {
    pub fn motif_series(&self, m: usize) -> Vec<f64> {
        self.rel_freq.iter().map(|row| row[m]).collect()
    }

    pub fn motif_count(&self) -> usize {
        self.rel_freq.first().map_or(0, Vec::len)
    }
}

/// Mean computed as an offset from the first value, so a constant series
/// returns that value exactly.
fn shifted_mean(xs: &[f64]) -> f64 {
    let Some(&first) = xs.first() else { return 0.0 };
    first + xs.iter().map(|x| x - first).sum::<f64>() / xs.len() as f64
}

pub fn std_dev(xs: &[f64], mode: StdDevMode) -> f64 {
    let mean = shifted_mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    let denom = match mode {
        StdDevMode::Population => xs.len(),
        StdDevMode::Sample => xs.len().saturating_sub(1),
    };
    if denom == 0 {
        return 0.0;
    }
    (ss / denom as f64).sqrt()
}

/// Standard deviation of each motif's frequency across periods.
pub fn fluctuation_scores(table: &PeriodFreqTable, mode: StdDevMode) -> Vec<f64> {
    (0..table.motif_count()).map(|m| std_dev(&table.motif_series(m), mode)).collect()
}

/// Mean of each motif's frequency across periods.
pub fn persistence_scores(table: &PeriodFreqTable) -> Vec<f64> {
    (0..table.motif_count()).map(|m| shifted_mean(&table.motif_series(m))).collect()
}

/// Column indices by score, highest first; equal scores keep column order.
pub fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Every metric in one place, as produced by the analyze stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsBundle {
    pub matrix: MotifMatrix,
    pub periods: PeriodFreqTable,
    pub std_dev_mode: StdDevMode,
    pub count_mode: CountMode,
    pub fluctuation: Vec<f64>,
    pub persistence: Vec<f64>,
    pub similarity: SimilarityMatrix,
    pub uniqueness: UniquenessTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsSettings {
    pub std_dev_mode: StdDevMode,
    pub count_mode: CountMode,
    /// Periods to compare; `None` means every period present in the matrix.
    pub periods: Option<Vec<Period>>,
}

pub fn analyze(
    records: &[MotifRecord],
    catalog: &MotifCatalog,
    novels: &[NovelMeta],
    settings: &AnalyticsSettings,
) -> Result<AnalyticsBundle, AnalyticsError> {
    let matrix = build_motif_matrix(records, catalog, novels, settings.count_mode)?;
    if matrix.grand_total() == 0 {
        return Err(AnalyticsError::EmptyMatrix);
    }
    let periods = match &settings.periods {
        Some(p) => p.clone(),
        None => {
            let present: BTreeMap<Period, ()> = novels.iter().map(|n| (n.period, ())).collect();
            present.into_keys().collect()
        }
    };
    let table = period_relative_frequencies(&matrix, &periods)?;
    let fluctuation = fluctuation_scores(&table, settings.std_dev_mode);
    let persistence = persistence_scores(&table);
    let similarity = similarity_matrix(&matrix)?;
    let uniqueness = uniqueness_scores(&matrix)?;
    Ok(AnalyticsBundle {
        matrix,
        periods: table,
        std_dev_mode: settings.std_dev_mode,
        count_mode: settings.count_mode,
        fluctuation,
        persistence,
        similarity,
        uniqueness,
    })
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    pub fn meta(id: &str, period: Period) -> NovelMeta {
        NovelMeta { id: id.into(), title: id.to_uppercase(), period, author: None }
    }

    pub fn matrix(counts: Vec<Vec<u64>>, periods: &[Period]) -> MotifMatrix {
        let novels = (0..counts.len()).map(|i| meta(&format!("n{i:02}"), periods[i % periods.len()])).collect();
        let motifs = (0..counts.first().map_or(0, Vec::len))
            .map(|m| MotifColumn { cluster_id: m, label: Some(format!("label {m}")) })
            .collect();
        MotifMatrix { novels, motifs, counts }
    }
}
