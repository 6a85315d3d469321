use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use motifs::config::PipelineConfig;
use motifs::gateway::FinetuneSpec;
use motifs::io;
use motifs::pipeline::{verify_fixture, Pipeline, PipelineError, Stage};

/// Motif extraction, clustering and corpus analytics for a collection of novels.
#[derive(Debug, Parser)]
#[command(name = "motifs", version)]
struct Cli {
    /// Pipeline config (TOML).
    #[arg(long, global = true, default_value = "motifs.toml")]
    config: PathBuf,
    /// Serve model calls from the cache or mock backends only.
    #[arg(long, global = true)]
    offline: bool,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Similarity threshold for network export.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Motifs listed per novel in the uniqueness report.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Motifs per figure table.
    #[arg(long, global = true)]
    figure_k: Option<usize>,
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load the corpus and split it into chunks.
    Ingest,
    /// Extract motif sentences from every chunk.
    Extract,
    /// Embed every motif sentence.
    Embed,
    /// Reduce and cluster the embeddings.
    Cluster,
    /// Summarize each cluster into a label.
    Label,
    /// Compute frequency, similarity and uniqueness metrics.
    Analyze,
    /// Write appendix listings, figure tables and the network.
    Report,
    /// Run every stage in order.
    RunAll,
    /// Check a published pair-similarity listing and build its network.
    VerifyFixture {
        file: PathBuf,
        /// Write the network document here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a chat-format fine-tuning dataset from gold annotations.
    Finetune {
        /// JSONL lines of {"novel_id", "chunk_index", "motifs": [...]}.
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_examples: Option<usize>,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = PipelineConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(t) = cli.threshold {
        cfg.analytics.network_threshold = t;
    }
    if let Some(k) = cli.k {
        cfg.analytics.top_k_unique = k;
    }
    if let Some(k) = cli.figure_k {
        cfg.analytics.top_k_figures = k;
    }
    if let Some(p) = cli.parallelism {
        cfg.parallelism = p;
    }
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(dir) = &cli.cache_dir {
        cfg.cache_dir = Some(dir.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let stage = match &cli.command {
        Command::Ingest => Some(Stage::Ingest),
        Command::Extract => Some(Stage::Extract),
        Command::Embed => Some(Stage::Embed),
        Command::Cluster => Some(Stage::Cluster),
        Command::Label => Some(Stage::Label),
        Command::Analyze => Some(Stage::Analyze),
        Command::Report => Some(Stage::Report),
        _ => None,
    };
    match &cli.command {
        Command::VerifyFixture { file, out } => {
            let threshold = cli.threshold.unwrap_or(0.70);
            let check = verify_fixture(file, threshold)?;
            let r = &check.report;
            println!("novels: {}", r.novels);
            println!("pairs: {} (expected {})", r.pairs, r.expected_pairs);
            println!("range: [{:.2}, {:.2}]", r.min, r.max);
            println!("ordering violations: {:?}", r.ordering_violations);
            println!("out of range: {:?}", r.out_of_range);
            println!("duplicates: {:?}", r.duplicates);
            println!("self pairs: {:?}", r.self_pairs);
            println!("missing pairs: {}", r.missing_pairs.len());
            println!(
                "network edges at >= {threshold:.2}: {} (listing lines at >= {threshold:.2}: {})",
                check.network.links.len(),
                check.pairs_at_threshold
            );
            if let Some(out) = out {
                io::write_json(out, &check.network)?;
            }
            if !r.is_ok() {
                return Err(PipelineError::Stale(format!("{} failed verification", file.display())));
            }
            Ok(())
        }
        Command::Finetune { annotations, out, n_examples } => {
            let pipeline = Pipeline::new(load_config(&cli)?, cli.offline)?;
            let mut spec = FinetuneSpec::default();
            if let Some(n) = n_examples {
                spec.n_examples = *n;
            }
            let s = pipeline.finetune(annotations, &spec, out)?;
            println!("finetune: {} records -> {} (sha256 {})", s.records, s.dataset_path.display(), s.dataset_sha256);
            Ok(())
        }
        Command::RunAll => {
            let pipeline = Pipeline::new(load_config(&cli)?, cli.offline)?;
            pipeline.run_all(|s| println!("{s}"))?;
            Ok(())
        }
        _ => {
            let pipeline = Pipeline::new(load_config(&cli)?, cli.offline)?;
            let summary = pipeline.run(stage.expect("stage subcommand"))?;
            println!("{summary}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
