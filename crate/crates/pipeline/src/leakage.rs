//! Benchmark-leakage screening: semantic similarity between training
//! instructions (user-side text only) and benchmark evaluation queries.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use curator_core::similarity::cosine_similarity;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::gateway::Gateway;

/// A benchmark's evaluation queries with their embeddings.
#[derive(Debug, Clone)]
pub struct BenchmarkQuerySet {
    pub name: String,
    pub queries: Vec<String>,
    pub embeddings: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
struct BenchmarkLine {
    query: String,
}

/// Load a benchmark query file (JSONL of `{"query"}`) and embed its
/// queries. The set name is the file stem.
pub fn load_benchmark(path: &Path, gateway: &Gateway) -> Result<BenchmarkQuerySet> {
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("benchmark")
        .to_string();
    let reader = BufReader::new(
        File::open(path).map_err(|e| Error::data_at(path, format!("cannot open: {e}")))?,
    );
    let mut queries = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: BenchmarkLine = serde_json::from_str(&line)
            .map_err(|e| Error::data_at(path, format!("line {}: {e}", idx + 1)))?;
        if parsed.query.trim().is_empty() {
            return Err(Error::data_at(path, format!("line {}: empty query", idx + 1)));
        }
        queries.push(parsed.query);
    }
    if queries.is_empty() {
        return Err(Error::data_at(path, "benchmark has no queries"));
    }
    let embeddings = gateway.embed_batch(&queries)?;
    Ok(BenchmarkQuerySet {
        name,
        queries,
        embeddings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageRemoval {
    pub instruction_id: String,
    pub benchmark: String,
    pub matched_query_index: usize,
    pub similarity: f64,
    /// The threshold in force when this removal happened; every
    /// similarity is at least this value.
    pub threshold: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LeakageReport {
    pub removed: Vec<LeakageRemoval>,
    pub threshold: f64,
    pub scanned: usize,
}

/// Remove every instruction whose user-side text reaches cosine
/// similarity `tau` against any benchmark query. Survivors keep their
/// order; the report lists each removal with its best match.
pub fn filter_leaked(
    corpus: Corpus,
    benchmarks: &[BenchmarkQuerySet],
    tau: f64,
    gateway: &Gateway,
) -> Result<(Corpus, LeakageReport)> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::config(format!(
            "leakage tau must lie in (0, 1], got {tau}"
        )));
    }
    let scanned = corpus.len();
    if benchmarks.is_empty() || corpus.is_empty() {
        return Ok((
            corpus,
            LeakageReport {
                removed: Vec::new(),
                threshold: tau,
                scanned,
            },
        ));
    }

    let texts: Vec<String> = corpus.iter().map(|r| r.flatten_user_turns()).collect();
    let embeddings = embed_chunked(gateway, &texts)?;

    let mut survivors = Corpus::new();
    let mut report = LeakageReport {
        removed: Vec::new(),
        threshold: tau,
        scanned,
    };
    for (record, embedding) in corpus.iter().zip(embeddings.iter()) {
        // Best match across all benchmarks; earlier benchmark/query wins
        // ties so the report is deterministic.
        let mut best: Option<(usize, usize, f64)> = None;
        for (b, bench) in benchmarks.iter().enumerate() {
            for (q, query_embedding) in bench.embeddings.iter().enumerate() {
                let sim = cosine_similarity(embedding, query_embedding);
                if best.is_none_or(|(_, _, s)| sim > s) {
                    best = Some((b, q, sim));
                }
            }
        }
        match best {
            Some((b, q, sim)) if sim >= tau => report.removed.push(LeakageRemoval {
                instruction_id: record.id.clone(),
                benchmark: benchmarks[b].name.clone(),
                matched_query_index: q,
                similarity: sim,
                threshold: tau,
            }),
            _ => survivors
                .push(record.clone())
                .expect("survivors inherit corpus invariants"),
        }
    }
    Ok((survivors, report))
}

fn embed_chunked(gateway: &Gateway, texts: &[String]) -> Result<Vec<Vec<f64>>> {
    const CHUNK: usize = 64;
    let mut out = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(CHUNK) {
        out.extend(gateway.embed_batch(chunk)?);
    }
    Ok(out)
}

/// Persist the report as JSONL, one removal per line.
pub fn save_report(report: &LeakageReport, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for removal in &report.removed {
        serde_json::to_writer(&mut w, removal)
            .map_err(|e| Error::data_at(path, format!("serialize removal: {e}")))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_report_removals(path: &Path) -> Result<Vec<LeakageRemoval>> {
    let reader = BufReader::new(
        File::open(path).map_err(|e| Error::data_at(path, format!("cannot open: {e}")))?,
    );
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::data_at(path, format!("line {}: {e}", idx + 1)))?,
        );
    }
    Ok(out)
}
