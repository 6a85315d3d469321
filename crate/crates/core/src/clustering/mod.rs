//! Embedding, reduction and density clustering of motif sentences.

pub mod hdbscan;
mod reduce;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use hdbscan::{hdbscan, HdbscanParams, HdbscanResult, SelectionMethod};
pub use reduce::{reduce, EmbeddingMetric, PcaModel, ReducerMethod, ReducerParams};

use crate::extraction::MotifRecord;
use crate::gateway::{EmbeddingRequest, Gateway, GatewayError};
use crate::io::{self, IoError};

#[derive(Debug, thiserror::Error)]
pub enum ClusteringError {
    #[error("no motif records to embed")]
    NoRecords,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("row {row} is not finite")]
    NonFinite { row: usize },
    #[error("row {row} has dimension {got}, expected {expected}")]
    Ragged { row: usize, expected: usize, got: usize },
    #[error("row {row} is a zero vector and cannot be normalized")]
    ZeroVector { row: usize },
    #[error("{0}")]
    Reduce(String),
    #[error("invalid parameters: {0}")]
    Config(String),
    #[error("{labels} labels for {records} records")]
    LabelCount { labels: usize, records: usize },
    #[error("embedding file {path}: {reason}")]
    Format { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Row-major matrix with one embedding per motif record; row `i` belongs to
/// record `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f64>,
}

const MAGIC: &[u8; 8] = b"MOTIFEMB";
const FORMAT_VERSION: u32 = 1;
const DTYPE_F64_LE: u32 = 1;
const HEADER_LEN: usize = 32;

impl EmbeddingMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, ClusteringError> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (row, v) in rows.into_iter().enumerate() {
            if v.len() != dim {
                return Err(ClusteringError::Ragged { row, expected: dim, got: v.len() });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(ClusteringError::NonFinite { row });
            }
            data.extend(v);
        }
        Ok(Self { dim, data })
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn normalize_rows(&mut self) -> Result<(), ClusteringError> {
        let dim = self.dim;
        for (row, chunk) in self.data.chunks_exact_mut(dim.max(1)).enumerate() {
            let norm = chunk.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(ClusteringError::ZeroVector { row });
            }
            chunk.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(())
    }

    /// Layout, all integers little-endian:
    ///
    /// | offset | size | field                      |
    /// |--------|------|----------------------------|
    /// | 0      | 8    | magic `MOTIFEMB`           |
    /// | 8      | 4    | format version (1)         |
    /// | 12     | 4    | dtype (1 = f64 LE)         |
    /// | 16     | 8    | dimension                  |
    /// | 24     | 8    | row count                  |
    /// | 32     | 8·d·n | rows, row-major           |
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&DTYPE_F64_LE.to_le_bytes());
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self, ClusteringError> {
        let bad = |reason: String| ClusteringError::Format { path: origin.to_string(), reason };
        if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
            return Err(bad("missing MOTIFEMB header".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        if u32_at(8) != FORMAT_VERSION {
            return Err(bad(format!("unsupported version {}", u32_at(8))));
        }
        if u32_at(12) != DTYPE_F64_LE {
            return Err(bad(format!("unsupported dtype {}", u32_at(12))));
        }
        let (dim, count) = (u64_at(16) as usize, u64_at(24) as usize);
        let expected =
            dim.checked_mul(count).and_then(|c| c.checked_mul(8)).ok_or_else(|| bad("header sizes overflow".into()))?;
        if bytes.len() - HEADER_LEN != expected {
            return Err(bad(format!("{} payload bytes for {count} rows of dimension {dim}", bytes.len() - HEADER_LEN)));
        }
        let data: Vec<f64> =
            bytes[HEADER_LEN..].chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(ClusteringError::NonFinite { row: i / dim.max(1) });
        }
        Ok(Self { dim, data })
    }

    pub fn write_binary(&self, path: &Path) -> Result<(), ClusteringError> {
        Ok(io::write_atomic(path, &self.to_bytes())?)
    }

    pub fn read_binary(path: &Path) -> Result<Self, ClusteringError> {
        let bytes = io::read(path)?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

/// Embeds each record's sentence. Rows are unit-normalized when `metric` is
/// cosine so that Euclidean geometry downstream tracks cosine distance.
pub fn embed_records(
    records: &[MotifRecord],
    gateway: &Gateway,
    model: &str,
    metric: EmbeddingMetric,
) -> Result<EmbeddingMatrix, ClusteringError> {
    if records.is_empty() {
        return Err(ClusteringError::NoRecords);
    }
    let req =
        EmbeddingRequest { model: model.to_string(), texts: records.iter().map(|r| r.sentence.clone()).collect() };
    let mut m = EmbeddingMatrix::from_rows(gateway.embed(&req)?)?;
    if metric == EmbeddingMetric::Cosine {
        m.normalize_rows()?;
    }
    Ok(m)
}

pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    1.0 - dot / (na * nb)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotifCluster {
    pub cluster_id: usize,
    /// Indices into the record list, ascending.
    pub member_records: Vec<usize>,
    pub occurrence_count: usize,
    pub medoid_record: usize,
    pub medoid_sentence: String,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub label_is_fallback: bool,
    #[serde(default)]
    pub label_truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotifCatalog {
    pub clusters: Vec<MotifCluster>,
    pub outlier_records: Vec<usize>,
    pub record_count: usize,
    pub reducer: ReducerParams,
    pub hdbscan: HdbscanParams,
}

impl MotifCatalog {
    pub fn clustered_count(&self) -> usize {
        self.clusters.iter().map(|c| c.occurrence_count).sum()
    }

    /// Cluster id per record, `None` for outliers.
    pub fn assignments(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.record_count];
        for c in &self.clusters {
            for &r in &c.member_records {
                out[r] = Some(c.cluster_id);
            }
        }
        out
    }
}

/// Member minimizing summed cosine distance to the other members; ties go to
/// the lower record index.
pub fn medoid(members: &[usize], embeddings: &EmbeddingMatrix) -> usize {
    let mut best = (f64::INFINITY, usize::MAX);
    for &i in members {
        let total: f64 =
            members.iter().filter(|&&j| j != i).map(|&j| cosine_distance(embeddings.row(i), embeddings.row(j))).sum();
        if total < best.0 || (total == best.0 && i < best.1) {
            best = (total, i);
        }
    }
    best.1
}

/// Groups records by label. Negative labels are outliers; the remaining labels
/// are renumbered densely in ascending order.
pub fn build_catalog(
    records: &[MotifRecord],
    labels: &[i64],
    embeddings: &EmbeddingMatrix,
    reducer: &ReducerParams,
    params: &HdbscanParams,
) -> Result<MotifCatalog, ClusteringError> {
    if labels.len() != records.len() || embeddings.len() != records.len() {
        return Err(ClusteringError::LabelCount { labels: labels.len(), records: records.len() });
    }
    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    let mut outlier_records = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        if l < 0 {
            outlier_records.push(i);
        } else {
            groups.entry(l).or_default().push(i);
        }
    }
    let clusters = groups
        .into_values()
        .enumerate()
        .map(|(cluster_id, member_records)| {
            let m = medoid(&member_records, embeddings);
            MotifCluster {
                cluster_id,
                occurrence_count: member_records.len(),
                medoid_record: m,
                medoid_sentence: records[m].sentence.clone(),
                member_records,
                label: None,
                label_is_fallback: false,
                label_truncated: false,
            }
        })
        .collect();
    Ok(MotifCatalog {
        clusters,
        outlier_records,
        record_count: records.len(),
        reducer: reducer.clone(),
        hdbscan: params.clone(),
    })
}

/// Reduce, cluster and assemble the catalog.
pub fn cluster_records(
    records: &[MotifRecord],
    embeddings: &EmbeddingMatrix,
    reducer: &ReducerParams,
    params: &HdbscanParams,
) -> Result<(MotifCatalog, HdbscanResult), ClusteringError> {
    params.validate().map_err(ClusteringError::Config)?;
    let reduced = reduce(embeddings, reducer)?;
    let result = hdbscan(&reduced, params);
    let catalog = build_catalog(records, &result.labels, embeddings, reducer, params)?;
    tracing::info!(
        records = records.len(),
        clusters = catalog.clusters.len(),
        outliers = catalog.outlier_records.len(),
        "clustering finished"
    );
    Ok((catalog, result))
}
