//! Stage runners behind the command line.
//!
//! Every stage reads its predecessors' artifacts from `<output_dir>/stages`,
//! writes its own atomically and records its parameters and output hashes in
//! `stages/manifest.json`. Reports go to `<output_dir>/reports`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analytics::{
    analyze, network_export, parse_similarity_listing, verify_pair_listing, AnalyticsBundle, AnalyticsError,
    FixtureError, ListingReport, NetworkDocument,
};
use crate::clustering::{cluster_records, embed_records, ClusteringError, EmbeddingMatrix, MotifCatalog};
use crate::config::{BackendKind, ConfigError, EndpointConfig, PipelineConfig};
use crate::corpus::{contexts, load_corpus, Chunk, CorpusError, NovelMeta};
use crate::digest::sha256_hex;
use crate::extraction::{extract_corpus, ExtractionError, ExtractionPrompt, ExtractionWarning, MotifRecord};
use crate::gateway::{
    emit_finetune_dataset, FinetuneError, FinetuneSpec, FinetuneSummary, Gateway, GatewayError, ResponseCache,
    StatsSnapshot,
};
use crate::io::{self, IoError};
use crate::labeling::{label_all, LabeledCatalog};
use crate::report::{unix_now, write_reports, ReportError, RunManifest, StageRecord};

pub const STAGES_DIR: &str = "stages";
pub const REPORTS_DIR: &str = "reports";
pub const CHUNKS_FILE: &str = "chunks.jsonl";
pub const CORPUS_FILE: &str = "corpus.json";
pub const MOTIFS_FILE: &str = "motifs.jsonl";
pub const WARNINGS_FILE: &str = "extraction_warnings.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const CATALOG_FILE: &str = "catalog.json";
pub const LABELED_FILE: &str = "labeled_catalog.json";
pub const ANALYTICS_FILE: &str = "analytics.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Extract,
    Embed,
    Cluster,
    Label,
    Analyze,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] =
        [Stage::Ingest, Stage::Extract, Stage::Embed, Stage::Cluster, Stage::Label, Stage::Analyze, Stage::Report];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Extract => "extract",
            Stage::Embed => "embed",
            Stage::Cluster => "cluster",
            Stage::Label => "label",
            Stage::Analyze => "analyze",
            Stage::Report => "report",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{stage} needs {}; run `{producer}` first", path.display())]
    MissingArtifact { stage: &'static str, producer: &'static str, path: PathBuf },
    #[error("{0}")]
    Stale(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Extraction(#[from] ExtractionError),
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Fixture(#[from] FixtureError),
    #[error(transparent)]
    Finetune(#[from] FinetuneError),
    #[error(transparent)]
    Io(#[from] IoError),
}

impl PipelineError {
    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            _ => 1,
        }
    }
}

/// What a stage did, for the console. Not written to any artifact.
#[derive(Debug, Clone)]
pub struct StageSummary {
    pub stage: Stage,
    pub message: String,
    pub backend: Option<StatsSnapshot>,
    pub outputs: Vec<PathBuf>,
}

impl std::fmt::Display for StageSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.stage.name(), self.message)?;
        if let Some(s) = &self.backend {
            write!(
                f,
                " [backend calls: {} chat, {} embed; cache hits: {} chat, {} embed]",
                s.chat_calls, s.embed_calls, s.chat_cache_hits, s.embed_cache_hits
            )?;
        }
        Ok(())
    }
}

/// Metadata the ingest stage hands to later stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusInfo {
    pub digest: String,
    pub novels: Vec<NovelMeta>,
    pub chunk_count: usize,
    pub oversized_chunks: usize,
}

pub struct Pipeline {
    cfg: PipelineConfig,
    offline: bool,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, offline: bool) -> Result<Self, PipelineError> {
        cfg.validate()?;
        Ok(Self { cfg, offline })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn stages_dir(&self) -> PathBuf {
        self.cfg.output_dir.join(STAGES_DIR)
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.cfg.output_dir.join(REPORTS_DIR)
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.stages_dir().join(name)
    }

    fn require(&self, stage: Stage, producer: Stage, name: &str) -> Result<PathBuf, PipelineError> {
        let path = self.artifact(name);
        if path.is_file() {
            Ok(path)
        } else {
            Err(PipelineError::MissingArtifact { stage: stage.name(), producer: producer.name(), path })
        }
    }

    fn gateway(&self, endpoint: &EndpointConfig, role: &str) -> Result<Gateway, PipelineError> {
        let backend = endpoint.backend(role, self.offline)?;
        Ok(Gateway::builder(backend)
            .cache(ResponseCache::new(self.cfg.cache_dir()))
            .retry(self.cfg.retry_policy())
            .offline(self.offline)
            .parallelism(self.cfg.parallelism)
            .build()?)
    }

    fn load_manifest(&self, stage: Stage) -> Result<RunManifest, PipelineError> {
        let path = self.require(stage, Stage::Ingest, MANIFEST_FILE)?;
        Ok(RunManifest::load(&path)?)
    }

    fn finish_stage(
        &self,
        manifest: &mut RunManifest,
        stage: Stage,
        params: serde_json::Value,
        files: &[(&str, Vec<u8>)],
    ) -> Result<Vec<PathBuf>, PipelineError> {
        let mut outputs = BTreeMap::new();
        let mut written = Vec::with_capacity(files.len());
        for (name, bytes) in files {
            let path = self.artifact(name);
            io::write_atomic(&path, bytes)?;
            outputs.insert(name.to_string(), sha256_hex(bytes));
            written.push(path);
        }
        let finished_at = self.cfg.record_timestamps.then(unix_now);
        manifest.record_stage(stage.name(), StageRecord { params, outputs, finished_at });
        manifest.save(&self.artifact(MANIFEST_FILE))?;
        Ok(written)
    }

    pub fn ingest(&self) -> Result<StageSummary, PipelineError> {
        let corpus = load_corpus(&self.cfg.corpus)?;
        let chunks = corpus.chunk(&self.cfg.tokenizer, &self.cfg.sentence_rules())?;
        let digest = corpus.digest();
        let info = CorpusInfo {
            digest: digest.clone(),
            novels: corpus.metas(),
            chunk_count: chunks.len(),
            oversized_chunks: chunks.iter().filter(|c| c.oversized_sentence).count(),
        };
        // Keep downstream records only while seed and corpus are unchanged.
        let mut manifest = match RunManifest::load(&self.artifact(MANIFEST_FILE)) {
            Ok(m) if m.seed == self.cfg.seed && m.corpus_digest == digest => m,
            _ => RunManifest::new(self.cfg.seed, digest),
        };
        let params = json!({
            "tokenizer": self.cfg.tokenizer,
            "sentence_terminators": self.cfg.sentence_rules().terminators(),
            "novels": corpus.len(),
        });
        let outputs = self.finish_stage(
            &mut manifest,
            Stage::Ingest,
            params,
            &[(CHUNKS_FILE, io::to_jsonl(&chunks)), (CORPUS_FILE, io::to_json_pretty(&info))],
        )?;
        Ok(StageSummary {
            stage: Stage::Ingest,
            message: format!(
                "{} novels, {} chunks ({} oversized sentences)",
                corpus.len(),
                chunks.len(),
                info.oversized_chunks
            ),
            backend: None,
            outputs,
        })
    }

    pub fn extract(&self) -> Result<StageSummary, PipelineError> {
        let chunks: Vec<Chunk> = io::read_jsonl(&self.require(Stage::Extract, Stage::Ingest, CHUNKS_FILE)?)?;
        let mut manifest = self.load_manifest(Stage::Extract)?;
        let gateway = self.gateway(&self.cfg.models.extraction, "extraction")?;
        let prompt = ExtractionPrompt::default();
        let settings = self.cfg.extraction_settings();
        let out = extract_corpus(&chunks, &gateway, &prompt, &settings)?;
        let params = json!({
            "backend": backend_kind(&self.cfg.models.extraction),
            "model": settings.model,
            "prompt_sha256": prompt.checksum(),
            "temperature": settings.temperature,
            "max_output_tokens": settings.max_output_tokens,
            "failure_threshold": settings.failure_threshold,
        });
        let outputs = self.finish_stage(
            &mut manifest,
            Stage::Extract,
            params,
            &[
                (MOTIFS_FILE, io::to_jsonl(&out.records)),
                (WARNINGS_FILE, io::to_jsonl::<ExtractionWarning>(&out.warnings)),
            ],
        )?;
        Ok(StageSummary {
            stage: Stage::Extract,
            message: format!(
                "{} motif records from {} chunks ({} failed, {} warnings)",
                out.records.len(),
                out.chunks_total,
                out.chunks_failed,
                out.warnings.len()
            ),
            backend: Some(gateway.stats()),
            outputs,
        })
    }

    fn records(&self, stage: Stage) -> Result<Vec<MotifRecord>, PipelineError> {
        Ok(io::read_jsonl(&self.require(stage, Stage::Extract, MOTIFS_FILE)?)?)
    }

    fn embeddings(&self, stage: Stage, records: &[MotifRecord]) -> Result<EmbeddingMatrix, PipelineError> {
        let m = EmbeddingMatrix::read_binary(&self.require(stage, Stage::Embed, EMBEDDINGS_FILE)?)?;
        if m.len() != records.len() {
            return Err(PipelineError::Stale(format!(
                "{EMBEDDINGS_FILE} has {} rows but {MOTIFS_FILE} has {} records; rerun `embed`",
                m.len(),
                records.len()
            )));
        }
        Ok(m)
    }

    pub fn embed(&self) -> Result<StageSummary, PipelineError> {
        let records = self.records(Stage::Embed)?;
        let mut manifest = self.load_manifest(Stage::Embed)?;
        let gateway = self.gateway(&self.cfg.models.embedding, "embedding")?;
        let model = &self.cfg.models.embedding.model;
        let m = embed_records(&records, &gateway, model, self.cfg.reducer.metric)?;
        let params = json!({
            "backend": backend_kind(&self.cfg.models.embedding),
            "model": model,
            "metric": self.cfg.reducer.metric,
            "dim": m.dim(),
        });
        let outputs = self.finish_stage(&mut manifest, Stage::Embed, params, &[(EMBEDDINGS_FILE, m.to_bytes())])?;
        Ok(StageSummary {
            stage: Stage::Embed,
            message: format!("{} vectors of dimension {}", m.len(), m.dim()),
            backend: Some(gateway.stats()),
            outputs,
        })
    }

    pub fn cluster(&self) -> Result<StageSummary, PipelineError> {
        let records = self.records(Stage::Cluster)?;
        let embeddings = self.embeddings(Stage::Cluster, &records)?;
        let mut manifest = self.load_manifest(Stage::Cluster)?;
        let (catalog, _) = cluster_records(&records, &embeddings, &self.cfg.reducer, &self.cfg.hdbscan)?;
        let params = json!({ "reducer": self.cfg.reducer, "hdbscan": self.cfg.hdbscan, "seed": self.cfg.seed });
        let outputs =
            self.finish_stage(&mut manifest, Stage::Cluster, params, &[(CATALOG_FILE, io::to_json_pretty(&catalog))])?;
        Ok(StageSummary {
            stage: Stage::Cluster,
            message: format!(
                "{} clusters, {} clustered records, {} outliers",
                catalog.clusters.len(),
                catalog.clustered_count(),
                catalog.outlier_records.len()
            ),
            backend: None,
            outputs,
        })
    }

    pub fn label(&self) -> Result<StageSummary, PipelineError> {
        let catalog: MotifCatalog = io::read_json(&self.require(Stage::Label, Stage::Cluster, CATALOG_FILE)?)?;
        let records = self.records(Stage::Label)?;
        let embeddings = self.embeddings(Stage::Label, &records)?;
        if catalog.record_count != records.len() {
            return Err(PipelineError::Stale(format!("{CATALOG_FILE} does not match {MOTIFS_FILE}; rerun `cluster`")));
        }
        let mut manifest = self.load_manifest(Stage::Label)?;
        let gateway = self.gateway(&self.cfg.models.labeling, "labeling")?;
        let spec = self.cfg.label_spec();
        let labeled = label_all(&catalog, &records, &embeddings, &gateway, &spec);
        let fallbacks = labeled.catalog.clusters.iter().filter(|c| c.label_is_fallback).count();
        let params = json!({
            "backend": backend_kind(&self.cfg.models.labeling),
            "model": spec.model,
            "prompt_sha256": spec.checksum(),
            "k_representatives": spec.k_representatives,
            "max_label_words": spec.max_label_words,
            "temperature": spec.temperature,
            "max_output_tokens": spec.max_output_tokens,
        });
        let outputs =
            self.finish_stage(&mut manifest, Stage::Label, params, &[(LABELED_FILE, io::to_json_pretty(&labeled))])?;
        Ok(StageSummary {
            stage: Stage::Label,
            message: format!("{} clusters labeled ({} medoid fallbacks)", labeled.catalog.clusters.len(), fallbacks),
            backend: Some(gateway.stats()),
            outputs,
        })
    }

    /// The labeled catalog when present, else the raw one.
    fn best_catalog(&self, stage: Stage) -> Result<(MotifCatalog, &'static str), PipelineError> {
        let labeled = self.artifact(LABELED_FILE);
        if labeled.is_file() {
            let l: LabeledCatalog = io::read_json(&labeled)?;
            return Ok((l.catalog, LABELED_FILE));
        }
        let raw = self.require(stage, Stage::Cluster, CATALOG_FILE)?;
        Ok((io::read_json(&raw)?, CATALOG_FILE))
    }

    pub fn analyze(&self) -> Result<StageSummary, PipelineError> {
        let (catalog, source) = self.best_catalog(Stage::Analyze)?;
        let records = self.records(Stage::Analyze)?;
        let info: CorpusInfo = io::read_json(&self.require(Stage::Analyze, Stage::Ingest, CORPUS_FILE)?)?;
        let mut manifest = self.load_manifest(Stage::Analyze)?;
        let settings = self.cfg.analytics_settings();
        let bundle = analyze(&records, &catalog, &info.novels, &settings)?;
        let params = json!({ "catalog": source, "settings": settings });
        let outputs =
            self.finish_stage(&mut manifest, Stage::Analyze, params, &[(ANALYTICS_FILE, io::to_json_pretty(&bundle))])?;
        Ok(StageSummary {
            stage: Stage::Analyze,
            message: format!(
                "{} novels x {} motifs over {} periods",
                bundle.matrix.novels.len(),
                bundle.matrix.motifs.len(),
                bundle.periods.periods.len()
            ),
            backend: None,
            outputs,
        })
    }

    pub fn report(&self) -> Result<StageSummary, PipelineError> {
        let labeled: LabeledCatalog = io::read_json(&self.require(Stage::Report, Stage::Label, LABELED_FILE)?)?;
        let bundle: AnalyticsBundle = io::read_json(&self.require(Stage::Report, Stage::Analyze, ANALYTICS_FILE)?)?;
        if let Some(m) = bundle.matrix.motifs.iter().find(|m| m.label.is_none()) {
            return Err(PipelineError::Stale(format!(
                "{ANALYTICS_FILE} was computed before motif {} was labeled; rerun `analyze`",
                m.cluster_id
            )));
        }
        let mut manifest = self.load_manifest(Stage::Report)?;
        let opts = self.cfg.report_options();
        manifest.record_stage(
            Stage::Report.name(),
            StageRecord {
                params: serde_json::to_value(&opts).expect("options serialize"),
                outputs: BTreeMap::new(),
                finished_at: self.cfg.record_timestamps.then(unix_now),
            },
        );
        manifest.save(&self.artifact(MANIFEST_FILE))?;
        let outputs = write_reports(&self.reports_dir(), &labeled.catalog, &bundle, &manifest, &opts)?;
        Ok(StageSummary {
            stage: Stage::Report,
            message: format!("{} files in {}", outputs.len(), self.reports_dir().display()),
            backend: None,
            outputs,
        })
    }

    pub fn run(&self, stage: Stage) -> Result<StageSummary, PipelineError> {
        match stage {
            Stage::Ingest => self.ingest(),
            Stage::Extract => self.extract(),
            Stage::Embed => self.embed(),
            Stage::Cluster => self.cluster(),
            Stage::Label => self.label(),
            Stage::Analyze => self.analyze(),
            Stage::Report => self.report(),
        }
    }

    /// Runs every stage in order, calling `each` after each one.
    pub fn run_all(&self, mut each: impl FnMut(&StageSummary)) -> Result<Vec<StageSummary>, PipelineError> {
        let mut out = Vec::with_capacity(Stage::ALL.len());
        for stage in Stage::ALL {
            let s = self.run(stage)?;
            each(&s);
            out.push(s);
        }
        Ok(out)
    }

    /// Builds a fine-tuning dataset from gold motif lists keyed by chunk.
    pub fn finetune(
        &self,
        annotations: &Path,
        spec: &FinetuneSpec,
        out: &Path,
    ) -> Result<FinetuneSummary, PipelineError> {
        let chunks: Vec<Chunk> = io::read_jsonl(&self.require(Stage::Ingest, Stage::Ingest, CHUNKS_FILE)?)?;
        let gold: Vec<Annotation> = io::read_jsonl(annotations)?;
        let ctxs = contexts(&chunks);
        let by_key: BTreeMap<(&str, usize), usize> =
            ctxs.iter().enumerate().map(|(i, c)| ((c.chunk.novel_id.as_str(), c.chunk.index), i)).collect();
        let mut pairs = Vec::with_capacity(gold.len());
        for a in &gold {
            let Some(&i) = by_key.get(&(a.novel_id.as_str(), a.chunk_index)) else {
                return Err(PipelineError::Stale(format!(
                    "{}: no chunk {} in novel {:?}; annotations must match the current ingest",
                    annotations.display(),
                    a.chunk_index,
                    a.novel_id
                )));
            };
            pairs.push((ctxs[i].clone(), a.motifs.clone()));
        }
        Ok(emit_finetune_dataset(&pairs, spec, &ExtractionPrompt::default(), out)?)
    }
}

/// One line of a gold annotation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub novel_id: String,
    pub chunk_index: usize,
    pub motifs: Vec<String>,
}

fn backend_kind(e: &EndpointConfig) -> serde_json::Value {
    match e.kind {
        BackendKind::Mock => json!("mock"),
        BackendKind::OpenAi => json!({ "kind": "openai", "base_url": e.base_url }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixtureCheck {
    pub report: ListingReport,
    pub threshold: f64,
    pub network: NetworkDocument,
    /// Pairs at or above the threshold by a direct scan of the listing.
    pub pairs_at_threshold: usize,
}

/// Loads a published pair-similarity listing, checks it and builds its
/// similarity network at `threshold`.
pub fn verify_fixture(path: &Path, threshold: f64) -> Result<FixtureCheck, PipelineError> {
    let text = io::read_string(path)?;
    let listing = parse_similarity_listing(&text, &[])?;
    let report = verify_pair_listing(&listing);
    let sim = listing.to_similarity()?;
    let network = network_export(&sim, &listing.nodes(), threshold)?;
    let pairs_at_threshold = listing.pairs.iter().filter(|p| p.similarity >= threshold).count();
    Ok(FixtureCheck { report, threshold, network, pairs_at_threshold })
}
