//! Distribution measurements over a finished corpus: 2D projection,
//! grid histogram, spatial entropy, coverage, depth, difficulty
//! histogram, tag co-occurrence graph, and the power-law fit of its
//! degree spectrum.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use curator_core::graph::{build_cooccurrence, CoOccurrenceGraph};
use curator_core::grid::grid_histogram;
use curator_core::metrics::depth_metric;
use curator_core::parse::parse_difficulty_label;
use curator_core::powerlaw::fit_power_law;
use curator_core::project::{project_2d, ProjectionMethod};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::gateway::{ChatRequest, Gateway, ModelRole};
use crate::templates::TemplateSet;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifficultySource {
    /// Score unrated records through the gateway scorer role.
    Scorer,
    /// Attach scores from a JSONL sidecar of `{"id", "difficulty"}`.
    Sidecar(std::path::PathBuf),
    /// Use only the scores already present on records.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyticsParams {
    pub grid_side: usize,
    pub projection: String,
    pub projection_seed: u64,
    pub log_binning: bool,
    pub difficulty: DifficultySource,
}

impl Default for AnalyticsParams {
    fn default() -> Self {
        AnalyticsParams {
            grid_side: 200,
            projection: "pca".to_string(),
            projection_seed: 0,
            log_binning: false,
            difficulty: DifficultySource::Scorer,
        }
    }
}

impl AnalyticsParams {
    pub fn projection_method(&self) -> Result<ProjectionMethod> {
        match self.projection.as_str() {
            "pca" => Ok(ProjectionMethod::Pca),
            "tsne" => Ok(ProjectionMethod::Tsne),
            other => Err(Error::config(format!(
                "analytics.projection must be \"pca\" or \"tsne\", got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DifficultyHistogram {
    /// Counts for scores 0..=4.
    pub counts: [u64; 5],
    pub mean: Option<f64>,
    pub unscored: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawSummary {
    pub gamma: f64,
    pub r_squared: f64,
    pub points_used: usize,
    pub ln_intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub total_records: usize,
    pub tagged_records: usize,
    pub grid_side: usize,
    pub spatial_entropy: f64,
    pub coverage: f64,
    pub nonempty_cells: usize,
    pub projection_method: String,
    pub projection_fell_back: bool,
    /// Per-record depth, aggregated two ways (mean and sum) over the
    /// records where depth is defined.
    pub depth_mean: Option<f64>,
    pub depth_sum: f64,
    pub depth_records: usize,
    pub depth_excluded: usize,
    pub difficulty: DifficultyHistogram,
    pub graph_nodes: usize,
    pub graph_edges: usize,
    pub degree_sum: usize,
    pub power_law: Option<PowerLawSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_law_error: Option<String>,
}

impl MetricsReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::data(format!("serialize metrics: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }
}

pub struct AnalyzeOutcome {
    pub metrics: MetricsReport,
    pub graph: CoOccurrenceGraph,
    pub coords: Vec<[f64; 2]>,
}

/// Run every distribution measurement. The corpus is scored in memory
/// when the difficulty source requires it; the input artifact is not
/// rewritten.
pub fn analyze(
    corpus: &mut Corpus,
    gateway: &Gateway,
    templates: &TemplateSet,
    params: &AnalyticsParams,
) -> Result<AnalyzeOutcome> {
    if corpus.is_empty() {
        return Err(Error::data("cannot analyze an empty corpus"));
    }
    if params.grid_side == 0 {
        return Err(Error::config("analytics.grid_side must be >= 1"));
    }

    // Difficulty scores.
    match &params.difficulty {
        DifficultySource::Scorer => {
            score_difficulty(corpus, gateway, templates)?;
        }
        DifficultySource::Sidecar(path) => {
            attach_difficulty_sidecar(corpus, path)?;
        }
        DifficultySource::None => {}
    }
    let difficulty = difficulty_histogram(corpus);

    // Semantic projection and grid statistics.
    let texts: Vec<String> = corpus.iter().map(|r| r.flatten_dialogue()).collect();
    let embeddings = embed_chunked(gateway, &texts)?;
    let projection = project_2d(
        &embeddings,
        params.projection_method()?,
        params.projection_seed,
    )
    .map_err(|e| Error::data(format!("projection: {e}")))?;
    if projection.fell_back {
        log::warn!("t-SNE fell back to PCA: all embeddings identical");
    }
    let histogram = grid_histogram(&projection.coords, params.grid_side)
        .map_err(|e| Error::data(format!("grid histogram: {e}")))?;

    // Depth.
    let mut depth_sum = 0.0;
    let mut depth_records = 0usize;
    let mut depth_excluded = 0usize;
    for r in corpus.iter() {
        match r.base_loss.and_then(|loss| depth_metric(r.fine_tags.len(), loss)) {
            Some(d) => {
                depth_sum += d;
                depth_records += 1;
            }
            None => depth_excluded += 1,
        }
    }
    let depth_mean = (depth_records > 0).then(|| depth_sum / depth_records as f64);

    // Tag co-occurrence graph and power-law fit.
    let tag_sets: Vec<std::collections::BTreeSet<String>> = corpus
        .iter()
        .filter(|r| !r.fine_tags.is_empty())
        .map(|r| r.fine_tags.clone())
        .collect();
    let graph = build_cooccurrence(tag_sets.iter());
    let (power_law, power_law_error) = match fit_power_law(&graph.degree_spectrum(), params.log_binning)
    {
        Ok(fit) => (
            Some(PowerLawSummary {
                gamma: fit.gamma,
                r_squared: fit.r_squared,
                points_used: fit.points_used,
                ln_intercept: fit.ln_intercept,
            }),
            None,
        ),
        Err(e) => (None, Some(e.to_string())),
    };

    let metrics = MetricsReport {
        total_records: corpus.len(),
        tagged_records: tag_sets.len(),
        grid_side: params.grid_side,
        spatial_entropy: histogram.spatial_entropy(),
        coverage: histogram.coverage(),
        nonempty_cells: histogram.nonempty_cells(),
        projection_method: match projection.method_used {
            ProjectionMethod::Pca => "pca".to_string(),
            ProjectionMethod::Tsne => "tsne".to_string(),
        },
        projection_fell_back: projection.fell_back,
        depth_mean,
        depth_sum,
        depth_records,
        depth_excluded,
        difficulty,
        graph_nodes: graph.nodes().len(),
        graph_edges: graph.edge_count(),
        degree_sum: graph.degree_sum(),
        power_law,
        power_law_error,
    };
    Ok(AnalyzeOutcome {
        metrics,
        graph,
        coords: projection.coords,
    })
}

/// Score unrated records through the scorer role. Unknown labels leave
/// the record unscored. Returns (scored, unparseable).
pub fn score_difficulty(
    corpus: &mut Corpus,
    gateway: &Gateway,
    templates: &TemplateSet,
) -> Result<(usize, usize)> {
    let scores: Vec<Result<Option<u8>>> = corpus
        .records()
        .par_iter()
        .map(|r| {
            if r.difficulty.is_some() {
                return Ok(None);
            }
            let instruction = r.flatten_user_turns();
            let prompt = templates.render("difficulty.v1", &[("instruction", &instruction)])?;
            let response =
                gateway.chat_complete(&ChatRequest::new(ModelRole::Scorer, "", prompt))?;
            Ok(parse_difficulty_label(&response))
        })
        .collect();

    let mut scored = 0;
    let mut unparseable = 0;
    for (record, score) in corpus.records_mut().iter_mut().zip(scores) {
        match score? {
            Some(s) => {
                record.difficulty = Some(s);
                scored += 1;
            }
            None => {
                if record.difficulty.is_none() {
                    unparseable += 1;
                }
            }
        }
    }
    Ok((scored, unparseable))
}

#[derive(Debug, Deserialize)]
struct DifficultySidecarEntry {
    id: String,
    difficulty: u8,
}

/// Attach difficulty scores from a sidecar file; returns the number
/// attached. Scores outside 0..=4 are fatal.
pub fn attach_difficulty_sidecar(corpus: &mut Corpus, path: &Path) -> Result<usize> {
    let reader = BufReader::new(
        File::open(path).map_err(|e| Error::data_at(path, format!("cannot open: {e}")))?,
    );
    let mut by_id: BTreeMap<String, u8> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: DifficultySidecarEntry = serde_json::from_str(&line)
            .map_err(|e| Error::data_at(path, format!("line {}: {e}", idx + 1)))?;
        if entry.difficulty > 4 {
            return Err(Error::data_at(
                path,
                format!("line {}: difficulty {} outside 0..=4", idx + 1, entry.difficulty),
            ));
        }
        by_id.insert(entry.id, entry.difficulty);
    }
    let mut attached = 0;
    for record in corpus.records_mut() {
        if let Some(&score) = by_id.get(&record.id) {
            record.difficulty = Some(score);
            attached += 1;
        }
    }
    Ok(attached)
}

/// Histogram of difficulty scores plus the arithmetic mean over scored
/// records.
pub fn difficulty_histogram(corpus: &Corpus) -> DifficultyHistogram {
    let mut histogram = DifficultyHistogram::default();
    let mut total = 0u64;
    let mut weighted = 0u64;
    for r in corpus.iter() {
        match r.difficulty {
            Some(score) if score <= 4 => {
                histogram.counts[score as usize] += 1;
                total += 1;
                weighted += score as u64;
            }
            _ => histogram.unscored += 1,
        }
    }
    histogram.mean = (total > 0).then(|| weighted as f64 / total as f64);
    histogram
}

fn embed_chunked(gateway: &Gateway, texts: &[String]) -> Result<Vec<Vec<f64>>> {
    const CHUNK: usize = 64;
    let mut out = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(CHUNK) {
        out.extend(gateway.embed_batch(chunk)?);
    }
    Ok(out)
}

/// CSV of the degree spectrum (`degree,frequency`) for external
/// plotting.
pub fn export_degree_spectrum_csv(graph: &CoOccurrenceGraph, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "degree,frequency")?;
    for (degree, frequency) in graph.degree_spectrum() {
        writeln!(w, "{degree},{frequency}")?;
    }
    w.flush()?;
    Ok(())
}

/// CSV of projected coordinates with each record's first domain tag
/// (`id,x,y,domain`), consumed by the plot stage.
pub fn export_projection_csv(corpus: &Corpus, coords: &[[f64; 2]], path: &Path) -> Result<()> {
    if corpus.len() != coords.len() {
        return Err(Error::data("projection CSV: coordinate count mismatch"));
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "id,x,y,domain")?;
    for (record, c) in corpus.iter().zip(coords) {
        let domain = record
            .domain_tags
            .iter()
            .next()
            .map(String::as_str)
            .unwrap_or("(untagged)");
        writeln!(w, "{},{},{},{}", csv_escape(&record.id), c[0], c[1], csv_escape(domain))?;
    }
    w.flush()?;
    Ok(())
}

fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{InstructionRecord, Turn};
    use crate::gateway::{GatewayConfig, MockBackend, MockMatcher, MockResponse, MockRule};
    use std::collections::BTreeSet;

    fn record(id: &str, tags: &[&str], base: Option<f64>, difficulty: Option<u8>) -> InstructionRecord {
        let mut r = InstructionRecord::new(id, vec![Turn::user(format!("task {id}"))]);
        r.fine_tags = tags.iter().map(|t| t.to_string()).collect();
        r.base_loss = base;
        r.difficulty = difficulty;
        r
    }

    #[test]
    fn difficulty_histogram_mean_of_symmetric_pair() {
        let mut corpus = Corpus::new();
        corpus.push(record("a", &[], None, Some(0))).unwrap();
        corpus.push(record("b", &[], None, Some(4))).unwrap();
        let h = difficulty_histogram(&corpus);
        assert_eq!(h.mean, Some(2.0));
        assert_eq!(h.counts, [1, 0, 0, 0, 1]);
        assert_eq!(h.unscored, 0);
    }

    #[test]
    fn scorer_label_hard_maps_to_three() {
        let mut mock = MockBackend::new(8);
        mock.push_rule(MockRule {
            role: Some(ModelRole::Scorer),
            matcher: MockMatcher::Any,
            response: MockResponse::Text("hard".into()),
        });
        let gw = Gateway::with_transport(Box::new(mock), &GatewayConfig::default());
        let mut corpus = Corpus::new();
        corpus.push(record("a", &[], None, None)).unwrap();
        let (scored, unparseable) =
            score_difficulty(&mut corpus, &gw, &TemplateSet::builtin()).unwrap();
        assert_eq!((scored, unparseable), (1, 0));
        assert_eq!(corpus.get("a").unwrap().difficulty, Some(3));
    }

    #[test]
    fn unknown_scorer_label_counts_as_unscored() {
        let mut mock = MockBackend::new(8);
        mock.push_rule(MockRule {
            role: Some(ModelRole::Scorer),
            matcher: MockMatcher::Any,
            response: MockResponse::Text("impossible".into()),
        });
        let gw = Gateway::with_transport(Box::new(mock), &GatewayConfig::default());
        let mut corpus = Corpus::new();
        corpus.push(record("a", &[], None, None)).unwrap();
        let (scored, unparseable) =
            score_difficulty(&mut corpus, &gw, &TemplateSet::builtin()).unwrap();
        assert_eq!((scored, unparseable), (0, 1));
        let h = difficulty_histogram(&corpus);
        assert_eq!(h.unscored, 1);
        assert_eq!(h.mean, None);
    }

    #[test]
    fn analyze_produces_consistent_metrics() {
        let mut corpus = Corpus::new();
        for i in 0..24 {
            let tags: Vec<String> = match i % 3 {
                0 => vec!["alpha".into(), "beta".into()],
                1 => vec!["alpha".into(), "gamma".into()],
                _ => vec!["delta".into()],
            };
            let tag_refs: Vec<&str> = tags.iter().map(String::as_str).collect();
            corpus
                .push(record(&format!("r{i:02}"), &tag_refs, Some(1.5), None))
                .unwrap();
        }
        let gw = Gateway::from_config(&GatewayConfig::default()).unwrap();
        let params = AnalyticsParams {
            grid_side: 10,
            ..AnalyticsParams::default()
        };
        let out = analyze(&mut corpus, &gw, &TemplateSet::builtin(), &params).unwrap();
        let m = &out.metrics;
        assert_eq!(m.total_records, 24);
        assert_eq!(m.tagged_records, 24);
        assert!(m.spatial_entropy > 0.0);
        assert!(m.spatial_entropy <= (m.nonempty_cells as f64).ln() + 1e-9);
        assert!((m.coverage - (m.nonempty_cells as f64).ln()).abs() < 1e-12);
        assert_eq!(m.degree_sum, 2 * m.graph_edges);
        // alpha-beta, alpha-gamma edges; delta isolated.
        assert_eq!(m.graph_nodes, 4);
        assert_eq!(m.graph_edges, 2);
        // Depth: ln(2)*1.5 for two-tag records, ln(1)*1.5 = 0 for singles.
        assert_eq!(m.depth_records, 24);
        assert!((m.depth_sum - 16.0 * (2.0f64).ln() * 1.5).abs() < 1e-9);
        // Scorer ran under the default mock: every record got a label.
        assert_eq!(m.difficulty.unscored, 0);
        assert_eq!(
            m.difficulty.counts.iter().sum::<u64>(),
            24
        );
    }

    #[test]
    fn analyze_is_deterministic() {
        let mut corpus1 = Corpus::new();
        let mut corpus2 = Corpus::new();
        for i in 0..12 {
            corpus1
                .push(record(&format!("r{i}"), &["t"], Some(1.0), None))
                .unwrap();
            corpus2
                .push(record(&format!("r{i}"), &["t"], Some(1.0), None))
                .unwrap();
        }
        let gw = Gateway::from_config(&GatewayConfig::default()).unwrap();
        let params = AnalyticsParams {
            grid_side: 5,
            ..AnalyticsParams::default()
        };
        let a = analyze(&mut corpus1, &gw, &TemplateSet::builtin(), &params).unwrap();
        let b = analyze(&mut corpus2, &gw, &TemplateSet::builtin(), &params).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.coords, b.coords);
    }

    #[test]
    fn degenerate_degree_spectrum_is_reported_not_fatal() {
        let mut corpus = Corpus::new();
        // All nodes end up with the same degree: single edge a-b.
        corpus.push(record("r1", &["a", "b"], None, Some(1))).unwrap();
        let gw = Gateway::from_config(&GatewayConfig::default()).unwrap();
        let params = AnalyticsParams {
            grid_side: 2,
            difficulty: DifficultySource::None,
            ..AnalyticsParams::default()
        };
        // One point only: projection requires >= 2; add another record.
        corpus.push(record("r2", &["a", "b"], None, Some(2))).unwrap();
        let out = analyze(&mut corpus, &gw, &TemplateSet::builtin(), &params).unwrap();
        assert!(out.metrics.power_law.is_none());
        assert!(out
            .metrics
            .power_law_error
            .as_deref()
            .unwrap()
            .contains("degenerate"));
    }

    #[test]
    fn difficulty_sidecar_attaches_by_id() {
        use std::io::Write as _;
        let mut corpus = Corpus::new();
        corpus.push(record("a", &[], None, None)).unwrap();
        corpus.push(record("b", &[], None, None)).unwrap();
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"id":"a","difficulty":4}}"#).unwrap();
        let attached = attach_difficulty_sidecar(&mut corpus, f.path()).unwrap();
        assert_eq!(attached, 1);
        assert_eq!(corpus.get("a").unwrap().difficulty, Some(4));
        assert_eq!(corpus.get("b").unwrap().difficulty, None);

        let mut bad = tempfile::NamedTempFile::new().unwrap();
        writeln!(bad, r#"{{"id":"b","difficulty":9}}"#).unwrap();
        assert!(attach_difficulty_sidecar(&mut corpus, bad.path()).is_err());
    }

    #[test]
    fn csv_exports_are_well_formed() {
        let mut corpus = Corpus::new();
        let mut r = record("r1", &["a", "b"], None, None);
        r.domain_tags = BTreeSet::from(["Math, applied".to_string()]);
        corpus.push(r).unwrap();
        corpus.push(record("r2", &["a"], None, None)).unwrap();

        let graph = build_cooccurrence(
            corpus
                .iter()
                .map(|r| &r.fine_tags)
                .collect::<Vec<_>>()
                .into_iter(),
        );
        let f = tempfile::NamedTempFile::new().unwrap();
        export_degree_spectrum_csv(&graph, f.path()).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();
        assert!(text.starts_with("degree,frequency\n"));

        let f2 = tempfile::NamedTempFile::new().unwrap();
        export_projection_csv(&corpus, &[[0.0, 1.0], [2.0, 3.0]], f2.path()).unwrap();
        let text = std::fs::read_to_string(f2.path()).unwrap();
        assert!(text.contains("\"Math, applied\""));
        assert!(text.lines().count() == 3);
    }
}
