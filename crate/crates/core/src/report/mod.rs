//! Appendix-style listings, figure tables and the similarity network.
//!
//! Output directory layout (all names fixed):
//!
//! | file                          | content                                   |
//! |-------------------------------|-------------------------------------------|
//! | `manifest.json`               | run manifest plus its digest              |
//! | `appendix_a_motifs.txt/.json` | motifs by occurrence count                |
//! | `appendix_b_uniqueness.txt/.json` | top lift motifs per novel             |
//! | `appendix_c_similarity.txt/.json` | novel pairs by cosine similarity      |
//! | `appendix_d_metrics.txt`      | most fluctuating and most persistent motifs |
//! | `fluctuation.csv`, `persistence.csv` | per-motif scores, ranked           |
//! | `figure_a_fluctuating.csv`    | top-k fluctuating motifs with period frequencies |
//! | `figure_b_persistent.csv`     | top-k persistent motifs with period frequencies  |
//! | `motif_matrix.csv`            | novel × motif counts                      |
//! | `period_frequencies.csv`      | period × motif relative frequencies       |
//! | `similarity_matrix.csv`       | novel × novel cosine similarity           |
//! | `uniqueness.csv`              | novel × motif lift                        |
//! | `network.json`                | node-link similarity graph                |
//!
//! Text and CSV files open with a `# run_manifest_sha256=<hex>` line; JSON
//! files carry a `run_manifest_sha256` field. Text shows two decimals for
//! similarity and lift and four for period metrics; CSV and JSON keep full
//! precision.

mod manifest;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use manifest::{unix_now, RunManifest, StageRecord, MANIFEST_FORMAT};

use crate::analytics::{network_export, rank_descending, AnalyticsBundle, AnalyticsError, NetworkNode};
use crate::clustering::MotifCatalog;
use crate::io::{self, IoError};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const APPENDIX_A_TXT: &str = "appendix_a_motifs.txt";
pub const APPENDIX_A_JSON: &str = "appendix_a_motifs.json";
pub const APPENDIX_B_TXT: &str = "appendix_b_uniqueness.txt";
pub const APPENDIX_B_JSON: &str = "appendix_b_uniqueness.json";
pub const APPENDIX_C_TXT: &str = "appendix_c_similarity.txt";
pub const APPENDIX_C_JSON: &str = "appendix_c_similarity.json";
pub const APPENDIX_D_TXT: &str = "appendix_d_metrics.txt";
pub const FLUCTUATION_CSV: &str = "fluctuation.csv";
pub const PERSISTENCE_CSV: &str = "persistence.csv";
pub const FIGURE_A_CSV: &str = "figure_a_fluctuating.csv";
pub const FIGURE_B_CSV: &str = "figure_b_persistent.csv";
pub const MATRIX_CSV: &str = "motif_matrix.csv";
pub const PERIODS_CSV: &str = "period_frequencies.csv";
pub const SIMILARITY_CSV: &str = "similarity_matrix.csv";
pub const UNIQUENESS_CSV: &str = "uniqueness.csv";
pub const NETWORK_JSON: &str = "network.json";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("cluster {0} has no label; run the label stage first")]
    Unlabeled(usize),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotifEntry {
    pub rank: usize,
    pub cluster_id: usize,
    pub label: String,
    pub occurrences: u64,
}

/// Motifs by occurrence count, largest first; equal counts by cluster id.
/// Counts come from the matrix so they follow the configured count mode.
pub fn motif_appendix(catalog: &MotifCatalog, bundle: &AnalyticsBundle) -> Result<Vec<MotifEntry>, ReportError> {
    let counts = bundle.matrix.col_sums();
    let mut entries = Vec::with_capacity(catalog.clusters.len());
    for (col, cluster) in catalog.clusters.iter().enumerate() {
        let label = cluster.label.clone().ok_or(ReportError::Unlabeled(cluster.cluster_id))?;
        entries.push(MotifEntry { rank: 0, cluster_id: cluster.cluster_id, label, occurrences: counts[col] });
    }
    entries.sort_by(|a, b| b.occurrences.cmp(&a.occurrences).then(a.cluster_id.cmp(&b.cluster_id)));
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
    if entries.is_empty() {
        tracing::warn!("catalog has no clusters; motif appendix is empty");
    }
    Ok(entries)
}

pub fn render_motif_appendix(entries: &[MotifEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let _ = writeln!(out, "{}. {} - {} occurrences", e.rank, e.label.trim_end(), e.occurrences);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniqueEntry {
    pub cluster_id: usize,
    pub label: String,
    pub lift: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NovelUniqueness {
    pub novel_id: String,
    pub title: String,
    pub motifs: Vec<UniqueEntry>,
}

pub fn uniqueness_report(bundle: &AnalyticsBundle, k: usize) -> Vec<NovelUniqueness> {
    let m = &bundle.matrix;
    m.novels
        .iter()
        .enumerate()
        .map(|(n, novel)| NovelUniqueness {
            novel_id: novel.id.clone(),
            title: novel.title.clone(),
            motifs: bundle
                .uniqueness
                .top_k(n, k)
                .into_iter()
                .map(|u| UniqueEntry {
                    cluster_id: u.cluster_id,
                    label: m.label(u.motif),
                    lift: u.lift,
                    count: u.count,
                })
                .collect(),
        })
        .collect()
}

pub fn render_uniqueness(report: &[NovelUniqueness]) -> String {
    let mut out = String::new();
    for novel in report {
        let _ = writeln!(out, "Novel: {}", novel.title);
        for u in &novel.motifs {
            let _ = writeln!(
                out,
                "- Unique Topic {}: {} (Relative Uniqueness Score: {:.2})",
                u.cluster_id,
                u.label.trim_end(),
                u.lift
            );
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityEntry {
    pub a: String,
    pub b: String,
    pub a_title: String,
    pub b_title: String,
    pub similarity: f64,
}

pub fn similarity_report(bundle: &AnalyticsBundle) -> Vec<SimilarityEntry> {
    let title =
        |id: &str| bundle.matrix.novels.iter().find(|n| n.id == id).map_or_else(|| id.to_string(), |n| n.title.clone());
    bundle
        .similarity
        .ranked_pairs()
        .into_iter()
        .map(|p| SimilarityEntry {
            a_title: title(&p.a),
            b_title: title(&p.b),
            a: p.a,
            b: p.b,
            similarity: p.similarity,
        })
        .collect()
}

pub fn render_similarity(entries: &[SimilarityEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let _ = writeln!(out, "{} and {}: similarity {:.2}", e.a_title, e.b_title, e.similarity);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureRow {
    pub cluster_id: usize,
    pub label: String,
    pub score: f64,
    /// One frequency per period, in the table's period order.
    pub frequencies: Vec<f64>,
}

/// Top `k` motifs by `scores` with their per-period frequencies. `k` is
/// capped at the motif count.
pub fn figure_rows(bundle: &AnalyticsBundle, scores: &[f64], k: usize) -> Vec<FigureRow> {
    if k > scores.len() {
        tracing::warn!(k, motifs = scores.len(), "top-k exceeds motif count; capped");
    }
    rank_descending(scores)
        .into_iter()
        .take(k)
        .map(|m| FigureRow {
            cluster_id: bundle.matrix.motifs[m].cluster_id,
            label: bundle.matrix.label(m),
            score: scores[m],
            frequencies: bundle.periods.motif_series(m),
        })
        .collect()
}

pub fn render_period_metrics(fluct: &[FigureRow], persist: &[FigureRow]) -> String {
    let mut out = String::from("Fluctuation (standard deviation of relative frequency across periods):\n");
    for r in fluct {
        let _ = writeln!(out, "Motif {}: Std. Dev. = {:.4}", r.cluster_id, r.score);
    }
    out.push_str("\nPersistence (mean relative frequency across periods):\n");
    for r in persist {
        let _ = writeln!(out, "Motif {}: Mean = {:.4}", r.cluster_id, r.score);
    }
    out
}

fn header_line(digest: &str) -> String {
    format!("# run_manifest_sha256={digest}\n")
}

fn csv_bytes(digest: &str, header: Vec<String>, rows: Vec<Vec<String>>) -> Result<Vec<u8>, ReportError> {
    let mut w =
        csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(header_line(digest).into_bytes());
    let csv_err = |e: csv::Error| ReportError::Csv(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| ReportError::Csv(e.to_string()))
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    run_manifest_sha256: &'a str,
    #[serde(flatten)]
    body: T,
}

fn json_bytes<T: Serialize>(digest: &str, body: T) -> Vec<u8> {
    io::to_json_pretty(&Stamped { run_manifest_sha256: digest, body })
}

#[derive(Serialize)]
struct Items<T> {
    items: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub top_k_unique: usize,
    pub top_k_figures: usize,
    pub network_threshold: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { top_k_unique: 3, top_k_figures: 5, network_threshold: 0.0 }
    }
}

/// Renders every report into `dir`, overwriting earlier files. Returns the
/// written file names in a fixed order.
pub fn write_reports(
    dir: &Path,
    catalog: &MotifCatalog,
    bundle: &AnalyticsBundle,
    manifest: &RunManifest,
    opts: &ReportOptions,
) -> Result<Vec<PathBuf>, ReportError> {
    let digest = manifest.digest();
    let d = digest.as_str();
    let mut files: Vec<(&str, Vec<u8>)> = Vec::new();

    #[derive(Serialize)]
    struct ManifestFile<'a> {
        digest: &'a str,
        manifest: &'a RunManifest,
    }
    files.push((MANIFEST_FILE, io::to_json_pretty(&ManifestFile { digest: d, manifest })));

    let a = motif_appendix(catalog, bundle)?;
    files.push((APPENDIX_A_TXT, [header_line(d), render_motif_appendix(&a)].concat().into_bytes()));
    files.push((APPENDIX_A_JSON, json_bytes(d, Items { items: &a })));

    let b = uniqueness_report(bundle, opts.top_k_unique);
    files.push((APPENDIX_B_TXT, [header_line(d), render_uniqueness(&b)].concat().into_bytes()));
    files.push((APPENDIX_B_JSON, json_bytes(d, Items { items: &b })));

    let c = similarity_report(bundle);
    files.push((APPENDIX_C_TXT, [header_line(d), render_similarity(&c)].concat().into_bytes()));
    files.push((APPENDIX_C_JSON, json_bytes(d, Items { items: &c })));

    let fluct_rows = figure_rows(bundle, &bundle.fluctuation, opts.top_k_figures);
    let persist_rows = figure_rows(bundle, &bundle.persistence, opts.top_k_figures);
    files.push((
        APPENDIX_D_TXT,
        [header_line(d), render_period_metrics(&fluct_rows, &persist_rows)].concat().into_bytes(),
    ));

    let periods: Vec<String> = bundle.periods.periods.iter().map(|p| p.to_string()).collect();
    let score_csv = |scores: &[f64], name: &str| {
        let header = ["rank", "cluster_id", "label", name].iter().map(|s| s.to_string()).collect();
        let rows = rank_descending(scores)
            .into_iter()
            .enumerate()
            .map(|(r, m)| {
                vec![
                    (r + 1).to_string(),
                    bundle.matrix.motifs[m].cluster_id.to_string(),
                    bundle.matrix.label(m),
                    scores[m].to_string(),
                ]
            })
            .collect();
        csv_bytes(d, header, rows)
    };
    files.push((FLUCTUATION_CSV, score_csv(&bundle.fluctuation, "std_dev")?));
    files.push((PERSISTENCE_CSV, score_csv(&bundle.persistence, "mean")?));

    let figure_csv = |rows: &[FigureRow], name: &str| {
        let mut header: Vec<String> = ["rank", "cluster_id", "label", name].iter().map(|s| s.to_string()).collect();
        header.extend(periods.iter().cloned());
        let body = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut v = vec![(i + 1).to_string(), r.cluster_id.to_string(), r.label.clone(), r.score.to_string()];
                v.extend(r.frequencies.iter().map(f64::to_string));
                v
            })
            .collect();
        csv_bytes(d, header, body)
    };
    files.push((FIGURE_A_CSV, figure_csv(&fluct_rows, "std_dev")?));
    files.push((FIGURE_B_CSV, figure_csv(&persist_rows, "mean")?));

    let m = &bundle.matrix;
    let motif_cols: Vec<String> = m.motifs.iter().map(|c| format!("motif_{}", c.cluster_id)).collect();
    let mut header: Vec<String> = vec!["novel_id".into(), "title".into(), "period".into()];
    header.extend(motif_cols.iter().cloned());
    let rows = m
        .novels
        .iter()
        .zip(&m.counts)
        .map(|(n, row)| {
            let mut v = vec![n.id.clone(), n.title.clone(), n.period.to_string()];
            v.extend(row.iter().map(u64::to_string));
            v
        })
        .collect();
    files.push((MATRIX_CSV, csv_bytes(d, header, rows)?));

    let mut header: Vec<String> = vec!["period".into(), "clustered_records".into()];
    header.extend(motif_cols.iter().cloned());
    let rows = periods
        .iter()
        .zip(&bundle.periods.totals)
        .zip(&bundle.periods.rel_freq)
        .map(|((p, total), freqs)| {
            let mut v = vec![p.clone(), total.to_string()];
            v.extend(freqs.iter().map(f64::to_string));
            v
        })
        .collect();
    files.push((PERIODS_CSV, csv_bytes(d, header, rows)?));

    let mut header: Vec<String> = vec!["novel_id".into()];
    header.extend(bundle.similarity.ids.iter().cloned());
    let rows = bundle
        .similarity
        .ids
        .iter()
        .zip(&bundle.similarity.sim)
        .map(|(id, row)| std::iter::once(id.clone()).chain(row.iter().map(f64::to_string)).collect())
        .collect();
    files.push((SIMILARITY_CSV, csv_bytes(d, header, rows)?));

    let mut header: Vec<String> = vec!["novel_id".into()];
    header.extend(motif_cols.iter().cloned());
    let rows = m
        .novels
        .iter()
        .zip(&bundle.uniqueness.lift)
        .map(|(n, row)| {
            std::iter::once(n.id.clone())
                .chain(row.iter().map(|l| l.map_or_else(String::new, |x| x.to_string())))
                .collect()
        })
        .collect();
    files.push((UNIQUENESS_CSV, csv_bytes(d, header, rows)?));

    let nodes: Vec<NetworkNode> = m
        .novels
        .iter()
        .map(|n| NetworkNode { id: n.id.clone(), title: n.title.clone(), period: Some(n.period) })
        .collect();
    let network = network_export(&bundle.similarity, &nodes, opts.network_threshold)?;
    files.push((NETWORK_JSON, json_bytes(d, &network)));

    std::fs::create_dir_all(dir).map_err(|source| IoError::Fs { path: dir.to_path_buf(), source })?;
    let mut written = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let path = dir.join(name);
        io::write_atomic(&path, &bytes)?;
        written.push(path);
    }
    Ok(written)
}
