//! Stage orchestration: each stage reads persisted artifacts, does its
//! work, and persists its outputs, so any stage can be re-run in
//! isolation and a full run is reproducible from the manifest.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::analytics::{self, DifficultySource};
use crate::config::PipelineConfig;
use crate::corpus::{self, Corpus};
use crate::diagnosis;
use crate::error::{Error, Result};
use crate::evolution::{self, EvolutionOutcome};
use crate::gateway::{Gateway, ModelRole};
use crate::leakage;
use crate::manifest::{hash_tree, RunManifest};
use crate::normalize;
use crate::plot;
use crate::selection::{self, SelectionReport};
use crate::tagging;
use crate::templates::TemplateSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Tag,
    Normalize,
    Select,
    Evolve,
    Diagnose,
    Dedup,
    Analyze,
    Plot,
}

impl Stage {
    pub const ORDER: [Stage; 8] = [
        Stage::Tag,
        Stage::Normalize,
        Stage::Select,
        Stage::Evolve,
        Stage::Diagnose,
        Stage::Dedup,
        Stage::Analyze,
        Stage::Plot,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Tag => "tag",
            Stage::Normalize => "normalize",
            Stage::Select => "select",
            Stage::Evolve => "evolve",
            Stage::Diagnose => "diagnose",
            Stage::Dedup => "dedup",
            Stage::Analyze => "analyze",
            Stage::Plot => "plot",
        }
    }

    pub fn parse(name: &str) -> Result<Stage> {
        Stage::ORDER
            .iter()
            .copied()
            .find(|s| s.name() == name.trim())
            .ok_or_else(|| Error::config(format!("unknown stage {name:?}")))
    }

    /// Parse a comma-separated stage list, keeping pipeline order.
    pub fn parse_list(list: &str) -> Result<Vec<Stage>> {
        let mut requested = BTreeSet::new();
        for name in list.split(',') {
            if name.trim().is_empty() {
                continue;
            }
            requested.insert(Stage::parse(name)?.name());
        }
        Ok(Stage::ORDER
            .iter()
            .copied()
            .filter(|s| requested.contains(s.name()))
            .collect())
    }

    /// Chat roles this stage sends requests to. `diagnose` needs the
    /// synthesizer only when responses are generated live.
    fn roles_needed(&self, config: &PipelineConfig) -> Vec<ModelRole> {
        match self {
            Stage::Tag => vec![ModelRole::Tagger],
            Stage::Normalize => vec![ModelRole::Tagger, ModelRole::Oracle],
            Stage::Select => vec![],
            Stage::Evolve => vec![ModelRole::Synthesizer, ModelRole::Judge],
            Stage::Diagnose => {
                if config.diagnosis.responses.is_some() {
                    vec![ModelRole::Oracle]
                } else {
                    vec![ModelRole::Oracle, ModelRole::Synthesizer]
                }
            }
            Stage::Dedup => vec![],
            Stage::Analyze => match config.analytics.difficulty {
                DifficultySource::Scorer => vec![ModelRole::Scorer],
                _ => vec![],
            },
            Stage::Plot => vec![],
        }
    }

    fn needs_embeddings(&self) -> bool {
        matches!(self, Stage::Normalize | Stage::Dedup | Stage::Analyze)
    }
}

/// Artifact layout inside the out directory.
#[derive(Debug, Clone)]
pub struct ArtifactPaths {
    root: PathBuf,
}

impl ArtifactPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ArtifactPaths { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn corpus(&self) -> PathBuf {
        self.root.join("corpus.jsonl")
    }
    pub fn tags(&self) -> PathBuf {
        self.root.join("tags.jsonl")
    }
    pub fn tagging_report(&self) -> PathBuf {
        self.root.join("tagging_report.json")
    }
    pub fn vocabulary(&self) -> PathBuf {
        self.root.join("vocabulary.json")
    }
    pub fn corpus_tagged(&self) -> PathBuf {
        self.root.join("corpus.tagged.jsonl")
    }
    pub fn selection(&self) -> PathBuf {
        self.root.join("selection.json")
    }
    pub fn evolution_log(&self) -> PathBuf {
        self.root.join("evolution.jsonl")
    }
    pub fn corpus_evolved(&self) -> PathBuf {
        self.root.join("corpus.evolved.jsonl")
    }
    pub fn diagnosis(&self) -> PathBuf {
        self.root.join("diagnosis.jsonl")
    }
    pub fn remedial(&self) -> PathBuf {
        self.root.join("remedial.jsonl")
    }
    pub fn corpus_augmented(&self) -> PathBuf {
        self.root.join("corpus.augmented.jsonl")
    }
    pub fn leakage_report(&self) -> PathBuf {
        self.root.join("leakage.jsonl")
    }
    pub fn corpus_final(&self) -> PathBuf {
        self.root.join("corpus.final.jsonl")
    }
    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.json")
    }
    pub fn degree_spectrum(&self) -> PathBuf {
        self.root.join("degree_spectrum.csv")
    }
    pub fn projection(&self) -> PathBuf {
        self.root.join("projection.csv")
    }
    pub fn plots_dir(&self) -> PathBuf {
        self.root.join("plots")
    }
    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
}

/// Everything a stage needs.
pub struct StageContext {
    pub config: PipelineConfig,
    pub gateway: Gateway,
    pub templates: TemplateSet,
    pub paths: ArtifactPaths,
}

impl StageContext {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let templates = match &config.templates_dir {
            Some(dir) => TemplateSet::with_overrides(dir)?,
            None => TemplateSet::builtin(),
        };
        let gateway = Gateway::from_config(&config.gateway)?;
        let paths = ArtifactPaths::new(&config.pipeline.out_dir);
        Ok(StageContext {
            config,
            gateway,
            templates,
            paths,
        })
    }
}

#[derive(Debug, Default, serde::Serialize)]
pub struct IngestSummary {
    pub records: usize,
    pub skipped_lines: usize,
    pub losses_attached: usize,
}

/// Ingest one or more raw JSONL corpora into `corpus.jsonl`. Multiple
/// inputs (or `namespace = true`) get their ids prefixed with the file
/// stem so sources cannot collide.
pub fn run_ingest(
    ctx: &StageContext,
    inputs: &[PathBuf],
    namespace: bool,
    losses: Option<&Path>,
    strict: bool,
) -> Result<IngestSummary> {
    if inputs.is_empty() {
        return Err(Error::config("ingest requires at least one --input"));
    }
    std::fs::create_dir_all(ctx.paths.root())?;
    let mut summary = IngestSummary::default();

    let mut merged = if inputs.len() == 1 && !namespace {
        let outcome = corpus::load_corpus(&inputs[0], strict)?;
        summary.skipped_lines += outcome.skipped();
        outcome.corpus
    } else {
        let mut sources = Vec::new();
        for path in inputs {
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::config(format!("bad input file name: {path:?}")))?
                .to_string();
            let outcome = corpus::load_corpus(path, strict)?;
            summary.skipped_lines += outcome.skipped();
            sources.push((stem, outcome.corpus));
        }
        corpus::merge_namespaced(sources)?
    };

    if let Some(sidecar) = losses {
        let outcome = corpus::attach_loss_metadata(&mut merged, sidecar, false)?;
        summary.losses_attached = outcome.attached;
    }
    summary.records = merged.len();
    corpus::save_corpus(&merged, &ctx.paths.corpus())?;
    Ok(summary)
}

fn load_artifact_corpus(path: &Path) -> Result<Corpus> {
    let outcome = corpus::load_corpus(path, true)?;
    Ok(outcome.corpus)
}

fn run_tag(ctx: &StageContext) -> Result<()> {
    let corpus = load_artifact_corpus(&ctx.paths.corpus())?;
    let outcome = tagging::generate_fine_tags(&corpus, &ctx.gateway, &ctx.templates)?;
    tagging::save_assignments(&outcome.assignments, &ctx.paths.tags())?;
    let report = serde_json::json!({
        "records": corpus.len(),
        "untagged": outcome.untagged.len(),
        "untagged_ids": outcome.untagged,
        "prompt_hash": outcome.prompt_hash,
    });
    std::fs::write(
        ctx.paths.tagging_report(),
        serde_json::to_string_pretty(&report).expect("json value serializes"),
    )?;
    log::info!(
        "tag: {} records, {} untagged",
        corpus.len(),
        report["untagged"]
    );
    Ok(())
}

fn run_normalize(ctx: &StageContext) -> Result<()> {
    let mut corpus = load_artifact_corpus(&ctx.paths.corpus())?;
    let assignments = tagging::load_assignments(&ctx.paths.tags())?;
    let mut outcome =
        normalize::normalize_vocabulary(&assignments, &ctx.gateway, ctx.config.normalization)?;

    // Domain induction and mapping over the normalized vocabulary.
    if outcome.vocabulary.len() >= 2 {
        let cats = tagging::induce_domain_categories(
            &outcome.vocabulary,
            ctx.config.tagging.top_k,
            &ctx.gateway,
            &ctx.templates,
        )?;
        let ids: Vec<String> = outcome.vocabulary.entries.keys().cloned().collect();
        use rayon::prelude::*;
        let domains: Vec<Result<BTreeSet<String>>> = ids
            .par_iter()
            .map(|id| tagging::map_tag_to_domain(id, &cats, &ctx.gateway, &ctx.templates))
            .collect();
        for (id, result) in ids.iter().zip(domains) {
            outcome
                .vocabulary
                .entries
                .get_mut(id)
                .expect("id came from the vocabulary")
                .domain_tags = result?;
        }
    } else if !outcome.vocabulary.is_empty() {
        log::warn!("normalize: vocabulary too small for domain induction; skipping");
    }

    normalize::rewrite_corpus_tags(&mut corpus, &assignments, &outcome)?;
    outcome.save(&ctx.paths.vocabulary())?;
    corpus::save_corpus(&corpus, &ctx.paths.corpus_tagged())?;
    log::info!(
        "normalize: {} raw tags -> {} vocabulary entries",
        outcome.remap.len(),
        outcome.vocabulary.len()
    );
    Ok(())
}

fn run_select(ctx: &StageContext) -> Result<()> {
    let corpus = load_artifact_corpus(&ctx.paths.corpus_tagged())?;
    let outcome = normalize::NormalizationOutcome::load(&ctx.paths.vocabulary())?;
    let report = selection::run_selection(
        &corpus,
        &outcome.vocabulary,
        ctx.config.selection,
        ctx.config.pipeline.seed,
    )?;
    report.save(&ctx.paths.selection())?;
    log::info!(
        "select: {} of {} records",
        report.selected_ids.len(),
        corpus.len()
    );
    Ok(())
}

fn run_evolve(ctx: &StageContext) -> Result<()> {
    let corpus = load_artifact_corpus(&ctx.paths.corpus_tagged())?;
    let report = SelectionReport::load(&ctx.paths.selection())?;
    let seeds: Vec<_> = corpus
        .iter()
        .filter(|r| report.selected_ids.contains(&r.id))
        .cloned()
        .collect();
    let outcome: EvolutionOutcome = evolution::evolve_corpus(
        &seeds,
        &ctx.gateway,
        &ctx.templates,
        &ctx.config.evolution,
        ctx.config.pipeline.seed,
    )?;
    evolution::save_log(&outcome.log, &ctx.paths.evolution_log())?;

    let mut evolved = corpus;
    for child in outcome.children {
        evolved.push(child)?;
    }
    corpus::save_corpus(&evolved, &ctx.paths.corpus_evolved())?;
    log::info!(
        "evolve: {} seeds -> {} passing children",
        seeds.len(),
        outcome.log.iter().filter(|r| r.verdict == evolution::Verdict::Pass).count()
    );
    Ok(())
}

fn run_diagnose(ctx: &StageContext) -> Result<()> {
    let corpus = load_artifact_corpus(&ctx.paths.corpus_evolved())?;
    let report = SelectionReport::load(&ctx.paths.selection())?;

    let eligible = report
        .selected_ids
        .iter()
        .filter(|id| {
            corpus
                .get(id)
                .is_some_and(|r| r.first_assistant_text().is_some())
        })
        .count();
    let n = ctx.config.diagnosis.set_size.min(eligible);
    if n < ctx.config.diagnosis.set_size {
        log::warn!(
            "diagnose: set size clamped from {} to {} eligible records",
            ctx.config.diagnosis.set_size,
            n
        );
    }
    let mut cases =
        diagnosis::build_diagnosis_set(&report, &corpus, n, ctx.config.pipeline.seed)?;

    match &ctx.config.diagnosis.responses {
        Some(path) => {
            let filled = diagnosis::fill_responses_from_sidecar(&mut cases, path)?;
            log::info!("diagnose: {filled} responses from sidecar");
            cases.retain(|c| {
                if c.model_response.is_none() {
                    log::warn!("diagnose: case {:?} has no sidecar response; dropped", c.id);
                    return false;
                }
                true
            });
        }
        None => diagnosis::fill_responses_live(&mut cases, &ctx.gateway, &ctx.templates)?,
    }

    let undiagnosed = diagnosis::diagnose_all(&mut cases, &ctx.gateway, &ctx.templates)?;
    diagnosis::save_cases(&cases, &ctx.paths.diagnosis())?;

    let mut remedial = Corpus::new();
    for case in &cases {
        if case.status == diagnosis::DiagnosisStatus::Deficient {
            let batch = diagnosis::synthesize_remedial(
                case,
                ctx.config.diagnosis.per_case,
                &ctx.gateway,
                &ctx.templates,
            )?;
            for record in batch.instructions {
                remedial.push(record)?;
            }
        }
    }
    corpus::save_corpus(&remedial, &ctx.paths.remedial())?;

    let mut augmented = corpus;
    for record in remedial.iter() {
        augmented.push(record.clone())?;
    }
    corpus::save_corpus(&augmented, &ctx.paths.corpus_augmented())?;
    log::info!(
        "diagnose: {} cases, {} undiagnosed, {} remedial records",
        cases.len(),
        undiagnosed,
        remedial.len()
    );
    Ok(())
}

fn run_dedup(ctx: &StageContext) -> Result<()> {
    let corpus = load_artifact_corpus(&ctx.paths.corpus_augmented())?;
    let mut benchmarks = Vec::new();
    for path in &ctx.config.leakage.benchmarks {
        benchmarks.push(leakage::load_benchmark(path, &ctx.gateway)?);
    }
    let (survivors, report) =
        leakage::filter_leaked(corpus, &benchmarks, ctx.config.leakage.tau, &ctx.gateway)?;
    corpus::save_corpus(&survivors, &ctx.paths.corpus_final())?;
    leakage::save_report(&report, &ctx.paths.leakage_report())?;
    log::info!(
        "dedup: removed {} of {} records at tau {}",
        report.removed.len(),
        report.scanned,
        report.threshold
    );
    Ok(())
}

fn run_analyze(ctx: &StageContext) -> Result<()> {
    let mut corpus = load_artifact_corpus(&ctx.paths.corpus_final())?;
    let outcome = analytics::analyze(&mut corpus, &ctx.gateway, &ctx.templates, &ctx.config.analytics)?;
    outcome.metrics.save(&ctx.paths.metrics())?;
    analytics::export_degree_spectrum_csv(&outcome.graph, &ctx.paths.degree_spectrum())?;
    analytics::export_projection_csv(&corpus, &outcome.coords, &ctx.paths.projection())?;
    log::info!(
        "analyze: entropy {:.4}, coverage {:.4}, gamma {:?}",
        outcome.metrics.spatial_entropy,
        outcome.metrics.coverage,
        outcome.metrics.power_law.map(|p| p.gamma)
    );
    Ok(())
}

fn run_plot(ctx: &StageContext) -> Result<()> {
    std::fs::create_dir_all(ctx.paths.plots_dir())?;
    let points = plot::load_projection_csv(&ctx.paths.projection())?;
    plot::plot_projection(&points, &ctx.paths.plots_dir().join("projection.svg"))?;

    let spectrum = plot::load_spectrum_csv(&ctx.paths.degree_spectrum())?;
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ctx.paths.metrics())?)
            .map_err(|e| Error::data(format!("metrics.json: {e}")))?;
    let fit: Option<analytics::PowerLawSummary> = metrics
        .get("power_law")
        .cloned()
        .and_then(|v| serde_json::from_value(v).ok());
    plot::plot_degree_spectrum(
        &spectrum,
        fit.as_ref(),
        &ctx.paths.plots_dir().join("degree_power_law.svg"),
    )?;

    let difficulty: analytics::DifficultyHistogram = metrics
        .get("difficulty")
        .cloned()
        .map(serde_json::from_value)
        .transpose()
        .map_err(|e| Error::data(format!("metrics.json difficulty: {e}")))?
        .unwrap_or_default();
    plot::plot_difficulty(&difficulty, &ctx.paths.plots_dir().join("difficulty.svg"))?;
    Ok(())
}

/// Validate that every requested stage has the endpoints it needs
/// before any work starts (only relevant with the mock disabled).
pub fn preflight(config: &PipelineConfig, stages: &[Stage]) -> Result<()> {
    config.validate()?;
    if config.gateway.mock {
        return Ok(());
    }
    for stage in stages {
        for role in stage.roles_needed(config) {
            if !config.gateway.roles.contains_key(&role) {
                return Err(Error::config(format!(
                    "stage {:?} needs a gateway endpoint for role {:?} (mock is disabled)",
                    stage.name(),
                    role.as_str()
                )));
            }
        }
        if stage.needs_embeddings() && config.gateway.embedding.is_none() {
            return Err(Error::config(format!(
                "stage {:?} needs a gateway embedding endpoint (mock is disabled)",
                stage.name()
            )));
        }
    }
    Ok(())
}

pub fn run_stage(ctx: &StageContext, stage: Stage) -> Result<()> {
    let result = match stage {
        Stage::Tag => run_tag(ctx),
        Stage::Normalize => run_normalize(ctx),
        Stage::Select => run_select(ctx),
        Stage::Evolve => run_evolve(ctx),
        Stage::Diagnose => run_diagnose(ctx),
        Stage::Dedup => run_dedup(ctx),
        Stage::Analyze => run_analyze(ctx),
        Stage::Plot => run_plot(ctx),
    };
    result.map_err(|e| e.in_stage(stage.name()))
}

/// Run the requested stages in pipeline order and write the manifest.
/// A stage failure aborts the run; artifacts of completed stages stay
/// on disk.
pub fn run_pipeline(ctx: &StageContext, stages: &[Stage]) -> Result<RunManifest> {
    preflight(&ctx.config, stages)?;
    std::fs::create_dir_all(ctx.paths.root())?;
    if !ctx.paths.corpus().exists() {
        return Err(Error::data(format!(
            "input corpus {} missing: run `curator ingest` first",
            ctx.paths.corpus().display()
        )));
    }

    let mut stages_run = Vec::new();
    for stage in Stage::ORDER {
        if stages.contains(&stage) {
            log::info!("running stage {}", stage.name());
            run_stage(ctx, stage)?;
            stages_run.push(stage.name().to_string());
        }
    }

    let manifest = RunManifest {
        config_hash: ctx.config.content_hash()?,
        seed: ctx.config.pipeline.seed,
        stages_run,
        artifacts: hash_tree(ctx.paths.root(), &["manifest.json"])?,
        templates: ctx.templates.all_hashes(),
    };
    manifest.save(&ctx.paths.manifest())?;
    Ok(manifest)
}
