use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use curator::config::PipelineConfig;
use curator::error::{Error, Result};
use curator::stages::{self, Stage, StageContext};

#[derive(Parser, Debug)]
#[command(
    name = "curator",
    version,
    about = "Closed-loop instruction-corpus curation: tagging, vocabulary normalization, seed selection, evolutionary synthesis, deficiency-driven synthesis, leakage filtering, and distribution analytics"
)]
struct Cli {
    /// TOML config file; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Artifact directory (overrides [pipeline].out_dir).
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Global RNG seed (overrides [pipeline].seed).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load raw JSONL corpora into the canonical corpus artifact.
    Ingest(IngestArgs),
    /// Generate fine-grained tags for every record.
    Tag,
    /// Normalize raw tags into the vocabulary and map domains.
    Normalize,
    /// Select informative seed instructions.
    Select,
    /// Evolve seed instructions into new children.
    Evolve(EvolveArgs),
    /// Diagnose model deficiencies and synthesize remedial data.
    Diagnose(DiagnoseArgs),
    /// Remove instructions that overlap benchmark queries.
    Dedup(DedupArgs),
    /// Compute distribution metrics over the final corpus.
    Analyze(AnalyzeArgs),
    /// Render SVG plots from the analyze artifacts.
    Plot,
    /// Run pipeline stages in order and write the run manifest.
    Run(RunArgs),
}

#[derive(Args, Debug)]
struct IngestArgs {
    /// Input JSONL file(s); several inputs are merged with namespaced ids.
    #[arg(long = "input", required = true, value_name = "PATH")]
    inputs: Vec<PathBuf>,

    /// Loss sidecar (JSONL of {"id","base_loss","ft_loss"}).
    #[arg(long, value_name = "PATH")]
    losses: Option<PathBuf>,

    /// Prefix ids with the file stem even for a single input.
    #[arg(long)]
    namespace: bool,

    /// Abort on the first malformed line instead of skipping.
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Debug)]
struct EvolveArgs {
    /// Evolution passes over the (growing) seed set.
    #[arg(long, value_name = "N")]
    generations: Option<u32>,

    /// Restrict the dimension draw (comma-separated:
    /// diversity,more_reasoning_steps,concretizing,deepening).
    #[arg(long, value_name = "LIST")]
    dimensions: Option<String>,

    /// Maximum dialogue rounds (1..=4).
    #[arg(long, value_name = "N")]
    rounds_max: Option<u8>,

    /// Children synthesized per seed per generation.
    #[arg(long, value_name = "N")]
    children_per_seed: Option<u32>,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    /// Fine-tuned-model responses (JSONL of {"id","response"}); when
    /// omitted, responses are generated through the synthesizer role.
    #[arg(long, value_name = "PATH")]
    responses: Option<PathBuf>,

    /// Diagnosis set size.
    #[arg(long, value_name = "N")]
    set_size: Option<usize>,

    /// Remedial instructions per deficient case.
    #[arg(long, value_name = "N")]
    per_case: Option<usize>,
}

#[derive(Args, Debug)]
struct DedupArgs {
    /// Similarity threshold in (0, 1].
    #[arg(long, value_name = "F")]
    tau: Option<f64>,

    /// Benchmark query files (repeat flag).
    #[arg(long = "benchmarks", value_name = "PATH")]
    benchmarks: Vec<PathBuf>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Grid side length for the spatial histogram.
    #[arg(long, value_name = "N")]
    grid: Option<usize>,

    /// Projection method: pca (default) or tsne.
    #[arg(long, value_name = "METHOD")]
    projection: Option<String>,

    /// Fit the power law on log-binned points.
    #[arg(long)]
    log_binning: bool,

    /// Difficulty sidecar (JSONL of {"id","difficulty"}) instead of the
    /// scorer role.
    #[arg(long, value_name = "PATH")]
    difficulty_sidecar: Option<PathBuf>,

    /// Skip difficulty scoring entirely.
    #[arg(long)]
    no_difficulty: bool,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Comma-separated subset of stages
    /// (tag,normalize,select,evolve,diagnose,dedup,analyze,plot).
    #[arg(long, value_name = "LIST")]
    stages: Option<String>,

    /// Raw input corpora to ingest before running (optional when
    /// corpus.jsonl already exists in the out dir).
    #[arg(long = "input", value_name = "PATH")]
    inputs: Vec<PathBuf>,

    /// Loss sidecar applied during the implicit ingest.
    #[arg(long, value_name = "PATH")]
    losses: Option<PathBuf>,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(dir) = &cli.out_dir {
        config.pipeline.out_dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        config.pipeline.seed = seed;
    }
    Ok(config)
}

fn apply_overrides(config: &mut PipelineConfig, command: &Command) -> Result<()> {
    match command {
        Command::Evolve(args) => {
            if let Some(g) = args.generations {
                config.evolution.generations = g;
            }
            if let Some(r) = args.rounds_max {
                config.evolution.rounds_max = r;
            }
            if let Some(c) = args.children_per_seed {
                config.evolution.children_per_seed = c;
            }
            if let Some(list) = &args.dimensions {
                let mut dims = Vec::new();
                for name in list.split(',') {
                    let name = name.trim();
                    if name.is_empty() {
                        continue;
                    }
                    let dim = serde_json::from_value(serde_json::Value::String(name.to_string()))
                        .map_err(|_| Error::config(format!("unknown dimension {name:?}")))?;
                    dims.push(dim);
                }
                config.evolution.dimensions = dims;
            }
        }
        Command::Diagnose(args) => {
            if let Some(path) = &args.responses {
                config.diagnosis.responses = Some(path.clone());
            }
            if let Some(n) = args.set_size {
                config.diagnosis.set_size = n;
            }
            if let Some(m) = args.per_case {
                config.diagnosis.per_case = m;
            }
        }
        Command::Dedup(args) => {
            if let Some(tau) = args.tau {
                config.leakage.tau = tau;
            }
            if !args.benchmarks.is_empty() {
                config.leakage.benchmarks = args.benchmarks.clone();
            }
        }
        Command::Analyze(args) => {
            if let Some(grid) = args.grid {
                config.analytics.grid_side = grid;
            }
            if let Some(projection) = &args.projection {
                config.analytics.projection = projection.clone();
            }
            if args.log_binning {
                config.analytics.log_binning = true;
            }
            if args.no_difficulty {
                config.analytics.difficulty = curator::analytics::DifficultySource::None;
            } else if let Some(path) = &args.difficulty_sidecar {
                config.analytics.difficulty =
                    curator::analytics::DifficultySource::Sidecar(path.clone());
            }
        }
        _ => {}
    }
    config.validate()
}

fn execute(cli: Cli) -> Result<()> {
    let mut config = load_config(&cli)?;
    apply_overrides(&mut config, &cli.command)?;

    match &cli.command {
        Command::Ingest(args) => {
            let ctx = StageContext::new(config)?;
            let summary = stages::run_ingest(
                &ctx,
                &args.inputs,
                args.namespace,
                args.losses.as_deref(),
                args.strict,
            )?;
            println!(
                "ingested {} records ({} lines skipped, {} losses attached) -> {}",
                summary.records,
                summary.skipped_lines,
                summary.losses_attached,
                ctx.paths.corpus().display()
            );
        }
        Command::Run(args) => {
            let stage_list = match &args.stages {
                Some(list) => Stage::parse_list(list)?,
                None => Stage::ORDER.to_vec(),
            };
            stages::preflight(&config, &stage_list)?;
            let ctx = StageContext::new(config)?;
            if !args.inputs.is_empty() {
                let summary = stages::run_ingest(
                    &ctx,
                    &args.inputs,
                    args.inputs.len() > 1,
                    args.losses.as_deref(),
                    ctx.config.pipeline.strict_ingest,
                )?;
                println!("ingested {} records", summary.records);
            }
            let manifest = stages::run_pipeline(&ctx, &stage_list)?;
            println!(
                "run complete: {} stages, {} artifacts, manifest {}",
                manifest.stages_run.len(),
                manifest.artifacts.len(),
                ctx.paths.manifest().display()
            );
        }
        command => {
            let stage = match command {
                Command::Tag => Stage::Tag,
                Command::Normalize => Stage::Normalize,
                Command::Select => Stage::Select,
                Command::Evolve(_) => Stage::Evolve,
                Command::Diagnose(_) => Stage::Diagnose,
                Command::Dedup(_) => Stage::Dedup,
                Command::Analyze(_) => Stage::Analyze,
                Command::Plot => Stage::Plot,
                Command::Ingest(_) | Command::Run(_) => unreachable!("handled above"),
            };
            stages::preflight(&config, &[stage])?;
            let ctx = StageContext::new(config)?;
            stages::run_stage(&ctx, stage)?;
            println!(
                "stage {} complete -> {}",
                stage.name(),
                ctx.paths.root().display()
            );
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = execute(cli) {
        eprintln!("error: {e}");
        let mut source = std::error::Error::source(&e);
        while let Some(s) = source {
            eprintln!("  caused by: {s}");
            source = s.source();
        }
        std::process::exit(e.exit_code());
    }
}
