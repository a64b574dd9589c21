//! Deficiency diagnosis and defect-driven instruction synthesis.
//!
//! A diagnosis set is drawn from the seed distribution (stratified over
//! domain tags); the oracle compares each fine-tuned-model response
//! against the reference and names the gaps; remedial instructions are
//! then synthesized per deficient case. Model responses come from a
//! sidecar file or, failing that, through the synthesizer role as a
//! stand-in for the model under diagnosis.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, InstructionRecord, Provenance, ProvenanceKind, Turn};
use crate::error::{Error, Result};
use crate::evolution::derive_rng;
use crate::gateway::{ChatRequest, Gateway, ModelRole};
use crate::selection::SelectionReport;
use crate::templates::TemplateSet;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deficiency {
    pub category: String,
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosisStatus {
    /// Response not yet compared.
    Pending,
    /// Oracle found nothing wrong.
    Clean,
    /// Oracle named at least one deficiency.
    Deficient,
    /// Oracle output stayed unparseable after one reprompt.
    Undiagnosed,
}

/// One diagnosis case: query, reference response, model response, and
/// the oracle's findings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisCase {
    /// Id of the source record.
    pub id: String,
    pub query: String,
    pub reference: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_response: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deficiencies: Vec<Deficiency>,
    pub status: DiagnosisStatus,
}

/// Stratified sample over the seed set, proportional to domain-tag
/// frequencies (largest-remainder rounding). Records without an
/// assistant turn cannot form a case and are skipped with a warning.
pub fn build_diagnosis_set(
    report: &SelectionReport,
    corpus: &Corpus,
    n: usize,
    rng_seed: u64,
) -> Result<Vec<DiagnosisCase>> {
    let mut eligible: Vec<&InstructionRecord> = Vec::new();
    for id in &report.selected_ids {
        let Some(record) = corpus.get(id) else {
            return Err(Error::data(format!(
                "selection report id {id:?} missing from corpus"
            )));
        };
        if record.first_assistant_text().is_none() {
            log::warn!("diagnosis: record {id:?} has no assistant turn; skipped");
            continue;
        }
        eligible.push(record);
    }
    if n > eligible.len() {
        return Err(Error::data(format!(
            "diagnosis set size {n} exceeds the {} eligible seed records",
            eligible.len()
        )));
    }

    // Stratum = lexicographically first domain tag.
    let mut strata: BTreeMap<String, Vec<&InstructionRecord>> = BTreeMap::new();
    for record in eligible {
        let key = record
            .domain_tags
            .iter()
            .next()
            .cloned()
            .unwrap_or_else(|| "(untagged)".to_string());
        strata.entry(key).or_default().push(record);
    }
    let total: usize = strata.values().map(Vec::len).sum();

    // Largest-remainder quotas summing exactly to n.
    let mut quotas: Vec<(String, usize, f64)> = strata
        .iter()
        .map(|(name, records)| {
            let exact = n as f64 * records.len() as f64 / total as f64;
            (name.clone(), exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = quotas.iter().map(|(_, q, _)| q).sum();
    let mut remainder = n - assigned;
    quotas.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap()
            .then_with(|| a.0.cmp(&b.0))
    });
    for quota in quotas.iter_mut() {
        if remainder == 0 {
            break;
        }
        // Never allocate past the stratum size.
        if quota.1 < strata[&quota.0].len() {
            quota.1 += 1;
            remainder -= 1;
        }
    }
    if remainder > 0 {
        // Spill anything left into strata with spare capacity.
        for quota in quotas.iter_mut() {
            while remainder > 0 && quota.1 < strata[&quota.0].len() {
                quota.1 += 1;
                remainder -= 1;
            }
        }
    }
    quotas.sort_by(|a, b| a.0.cmp(&b.0));

    let mut cases = Vec::with_capacity(n);
    for (name, quota, _) in quotas {
        let records = &strata[&name];
        let mut ids: Vec<&InstructionRecord> = records.clone();
        ids.sort_by(|a, b| a.id.cmp(&b.id));
        let mut rng = derive_rng(rng_seed, &format!("diagnosis/{name}"));
        let chosen = ids.choose_multiple(&mut rng, quota);
        let mut chosen: Vec<&&InstructionRecord> = chosen.collect();
        chosen.sort_by(|a, b| a.id.cmp(&b.id));
        for record in chosen {
            cases.push(DiagnosisCase {
                id: record.id.clone(),
                query: record.first_user_text().unwrap_or_default().to_string(),
                reference: record
                    .first_assistant_text()
                    .unwrap_or_default()
                    .to_string(),
                model_response: None,
                deficiencies: Vec::new(),
                status: DiagnosisStatus::Pending,
            });
        }
    }
    cases.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(cases)
}

/// Sidecar line shape: `{"id", "response"}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ResponseSidecarEntry {
    pub id: String,
    pub response: String,
}

/// Fill model responses from a sidecar file. Returns how many cases
/// were filled.
pub fn fill_responses_from_sidecar(cases: &mut [DiagnosisCase], path: &Path) -> Result<usize> {
    let reader = BufReader::new(
        File::open(path).map_err(|e| Error::data_at(path, format!("cannot open: {e}")))?,
    );
    let mut by_id: BTreeMap<String, String> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ResponseSidecarEntry = serde_json::from_str(&line)
            .map_err(|e| Error::data_at(path, format!("line {}: {e}", idx + 1)))?;
        by_id.insert(entry.id, entry.response);
    }
    let mut filled = 0;
    for case in cases.iter_mut() {
        if let Some(response) = by_id.get(&case.id) {
            case.model_response = Some(response.clone());
            filled += 1;
        }
    }
    Ok(filled)
}

/// Generate the missing model responses through the synthesizer role
/// (the live stand-in for the model under diagnosis).
pub fn fill_responses_live(
    cases: &mut [DiagnosisCase],
    gateway: &Gateway,
    templates: &TemplateSet,
) -> Result<()> {
    let responses: Vec<Result<Option<String>>> = cases
        .par_iter()
        .map(|case| {
            if case.model_response.is_some() {
                return Ok(None);
            }
            let dialogue = format!("user: {}", case.query);
            let prompt = templates.render("dialogue_reply.v1", &[("dialogue", &dialogue)])?;
            let response =
                gateway.chat_complete(&ChatRequest::new(ModelRole::Synthesizer, "", prompt))?;
            Ok(Some(response))
        })
        .collect();
    for (case, response) in cases.iter_mut().zip(responses) {
        if let Some(r) = response? {
            case.model_response = Some(r);
        }
    }
    Ok(())
}

/// Parse the oracle's structured output: `NONE` means no deficiency,
/// otherwise numbered `Deficiency: <category> - <description>` lines.
/// `None` means unparseable.
pub fn parse_deficiencies(response: &str) -> Option<Vec<Deficiency>> {
    let trimmed = response.trim();
    if trimmed.eq_ignore_ascii_case("NONE") {
        return Some(Vec::new());
    }
    let mut out = Vec::new();
    for line in trimmed.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let rest = strip_numbering(line);
        let Some(body) = rest.strip_prefix("Deficiency:") else {
            continue;
        };
        let body = body.trim();
        let (category, description) = match body.split_once('-') {
            Some((c, d)) => (c.trim(), d.trim()),
            None => (body, ""),
        };
        if category.is_empty() {
            continue;
        }
        out.push(Deficiency {
            category: category.to_string(),
            description: description.to_string(),
        });
    }
    if out.is_empty() {
        None
    } else {
        Some(out)
    }
}

fn strip_numbering(line: &str) -> &str {
    let digits = line.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return r.trim();
        }
    }
    line
}

/// Compare the model response against the reference via the oracle and
/// record the deficiencies. Unparseable output is reprompted once, then
/// the case is marked undiagnosed.
pub fn diagnose_case(
    case: &mut DiagnosisCase,
    gateway: &Gateway,
    templates: &TemplateSet,
) -> Result<()> {
    let response = case.model_response.clone().ok_or_else(|| {
        Error::data(format!("case {:?} has no model response to diagnose", case.id))
    })?;
    if response.trim().is_empty() {
        return Err(Error::data(format!(
            "case {:?} has an empty model response",
            case.id
        )));
    }
    let prompt = templates.render(
        "diagnose.v1",
        &[
            ("query", case.query.as_str()),
            ("reference", case.reference.as_str()),
            ("response", response.as_str()),
        ],
    )?;
    for attempt in 0..2 {
        let user = if attempt == 0 {
            prompt.clone()
        } else {
            format!(
                "{prompt}\n\nAnswer with NONE or numbered \"Deficiency: <category> - <description>\" lines only."
            )
        };
        let oracle = gateway.chat_complete(&ChatRequest::new(ModelRole::Oracle, "", user))?;
        if let Some(deficiencies) = parse_deficiencies(&oracle) {
            case.status = if deficiencies.is_empty() {
                DiagnosisStatus::Clean
            } else {
                DiagnosisStatus::Deficient
            };
            case.deficiencies = deficiencies;
            return Ok(());
        }
    }
    case.status = DiagnosisStatus::Undiagnosed;
    case.deficiencies.clear();
    Ok(())
}

/// Diagnose all cases in parallel; returns the number left undiagnosed.
pub fn diagnose_all(
    cases: &mut [DiagnosisCase],
    gateway: &Gateway,
    templates: &TemplateSet,
) -> Result<usize> {
    let results: Vec<Result<DiagnosisCase>> = cases
        .par_iter()
        .map(|case| {
            let mut c = case.clone();
            diagnose_case(&mut c, gateway, templates)?;
            Ok(c)
        })
        .collect();
    let mut undiagnosed = 0;
    for (slot, result) in cases.iter_mut().zip(results) {
        *slot = result?;
        if slot.status == DiagnosisStatus::Undiagnosed {
            undiagnosed += 1;
        }
    }
    Ok(undiagnosed)
}

/// Remedial instructions synthesized for one deficient case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemedialBatch {
    pub source_case_id: String,
    pub instructions: Vec<InstructionRecord>,
}

/// Parse `Instruction: <text>` lines (optionally numbered).
pub fn parse_remedial_instructions(response: &str) -> Vec<String> {
    response
        .lines()
        .filter_map(|line| {
            strip_numbering(line.trim())
                .strip_prefix("Instruction:")
                .map(|t| t.trim().to_string())
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// Prompt the oracle to synthesize up to `m` instructions that target
/// the case's deficiencies. Calling this with no deficiencies is a
/// contract violation.
pub fn synthesize_remedial(
    case: &DiagnosisCase,
    m: usize,
    gateway: &Gateway,
    templates: &TemplateSet,
) -> Result<RemedialBatch> {
    if case.deficiencies.is_empty() {
        return Err(Error::data(format!(
            "case {:?}: remedial synthesis requires at least one deficiency",
            case.id
        )));
    }
    if m < 1 {
        return Err(Error::config("remedial batch size must be >= 1"));
    }
    let listing = case
        .deficiencies
        .iter()
        .map(|d| format!("- {}: {}", d.category, d.description))
        .collect::<Vec<_>>()
        .join("\n");
    let count = m.to_string();
    let prompt = templates.render(
        "remedial.v1",
        &[("deficiencies", listing.as_str()), ("count", count.as_str())],
    )?;
    let response = gateway.chat_complete(&ChatRequest::new(ModelRole::Oracle, "", prompt))?;
    let texts = parse_remedial_instructions(&response);
    if texts.is_empty() {
        log::warn!("case {:?}: remedial synthesis parsed no instructions", case.id);
    }

    let mut instructions = Vec::new();
    for (j, text) in texts.into_iter().take(m).enumerate() {
        let mut record =
            InstructionRecord::new(format!("{}::r{j}", case.id), vec![Turn::user(text)]);
        record.provenance = Provenance {
            kind: ProvenanceKind::Remedial,
            parents: vec![case.id.clone()],
        };
        instructions.push(record);
    }
    Ok(RemedialBatch {
        source_case_id: case.id.clone(),
        instructions,
    })
}

pub fn save_cases(cases: &[DiagnosisCase], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for case in cases {
        serde_json::to_writer(&mut w, case)
            .map_err(|e| Error::data_at(path, format!("serialize case: {e}")))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_cases(path: &Path) -> Result<Vec<DiagnosisCase>> {
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
