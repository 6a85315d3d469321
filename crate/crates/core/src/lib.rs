//! Literary motif extraction and corpus analytics.
//!
//! The pipeline chunks a corpus of novels, asks a chat model for the motifs in
//! every chunk, embeds and clusters the motif sentences with HDBSCAN, labels
//! each cluster, and derives period-level and novel-level statistics from the
//! resulting novel × motif count matrix.

pub mod analytics;
pub mod clustering;
pub mod config;
pub mod corpus;
pub mod digest;
pub mod extraction;
pub mod gateway;
pub mod io;
pub mod labeling;
pub mod pipeline;
pub mod report;
