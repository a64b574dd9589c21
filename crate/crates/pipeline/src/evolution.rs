//! Metadata-guided random evolution of seed instructions with
//! judge-based validation and multi-turn expansion.
//!
//! Each child derives its RNG from (global seed, child id), so draws do
//! not depend on worker scheduling and the stage is bit-reproducible
//! with the mock gateway.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{InstructionRecord, Provenance, ProvenanceKind, Turn};
use crate::error::{Error, Result};
use crate::gateway::{stable_hash, ChatRequest, Gateway, ModelRole};
use crate::templates::TemplateSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvolutionDimension {
    Diversity,
    MoreReasoningSteps,
    Concretizing,
    Deepening,
}

impl EvolutionDimension {
    pub const ALL: [EvolutionDimension; 4] = [
        EvolutionDimension::Diversity,
        EvolutionDimension::MoreReasoningSteps,
        EvolutionDimension::Concretizing,
        EvolutionDimension::Deepening,
    ];

    pub fn template(&self) -> &'static str {
        match self {
            EvolutionDimension::Diversity => "evolve_diversity.v1",
            EvolutionDimension::MoreReasoningSteps => "evolve_reasoning.v1",
            EvolutionDimension::Concretizing => "evolve_concretize.v1",
            EvolutionDimension::Deepening => "evolve_deepen.v1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

/// Log entry for one evolution attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionRecord {
    /// Absent only when synthesis produced no usable child query.
    pub child: Option<InstructionRecord>,
    pub parent_id: String,
    pub dimension: EvolutionDimension,
    pub verdict: Verdict,
    /// Completed dialogue rounds; recorded only for passing children.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_reason: Option<String>,
    /// True when dialogue generation failed mid-way and the child kept
    /// only its completed rounds.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionParams {
    /// Evolution passes; generation g evolves the passing children of
    /// generation g-1.
    pub generations: u32,
    pub children_per_seed: u32,
    /// Dimensions the uniform draw may choose from.
    pub dimensions: Vec<EvolutionDimension>,
    /// Rounds are drawn uniformly from 1..=rounds_max.
    pub rounds_max: u8,
}

impl Default for EvolutionParams {
    fn default() -> Self {
        EvolutionParams {
            generations: 1,
            children_per_seed: 1,
            dimensions: EvolutionDimension::ALL.to_vec(),
            rounds_max: 4,
        }
    }
}

impl EvolutionParams {
    pub fn validate(&self) -> Result<()> {
        if self.dimensions.is_empty() {
            return Err(Error::config("evolution.dimensions must not be empty"));
        }
        if !(1..=4).contains(&self.rounds_max) {
            return Err(Error::config("evolution.rounds_max must lie in 1..=4"));
        }
        if self.generations < 1 || self.children_per_seed < 1 {
            return Err(Error::config(
                "evolution.generations and children_per_seed must be >= 1",
            ));
        }
        Ok(())
    }
}

/// RNG derived from the global seed and a stable per-child key.
pub fn derive_rng(global_seed: u64, key: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(global_seed ^ stable_hash(key))
}

/// Uniform draw over the allowed dimensions.
pub fn draw_dimension(rng: &mut ChaCha8Rng, allowed: &[EvolutionDimension]) -> EvolutionDimension {
    allowed[rng.gen_range(0..allowed.len())]
}

/// Evolve one seed into one child: draw a dimension, synthesize the
/// child query, validate it, and expand passing children into a
/// multi-turn dialogue. Synthesis/judge transport failures become fail
/// verdicts, not stage aborts.
pub fn evolve_instruction(
    seed: &InstructionRecord,
    child_id: String,
    rng: &mut ChaCha8Rng,
    gateway: &Gateway,
    templates: &TemplateSet,
    params: &EvolutionParams,
) -> EvolutionRecord {
    let dimension = draw_dimension(rng, &params.dimensions);
    let rounds_drawn: u8 = rng.gen_range(1..=params.rounds_max);

    let fail = |child: Option<InstructionRecord>, reason: &str| EvolutionRecord {
        child,
        parent_id: seed.id.clone(),
        dimension,
        verdict: Verdict::Fail,
        rounds: None,
        failure_reason: Some(reason.to_string()),
        truncated: false,
    };

    // Step 1: synthesize the evolved query.
    let flattened = seed.flatten_dialogue();
    let prompt = match templates.render(dimension.template(), &[("instruction", &flattened)]) {
        Ok(p) => p,
        Err(e) => return fail(None, &format!("template: {e}")),
    };
    let response =
        match gateway.chat_complete(&ChatRequest::new(ModelRole::Synthesizer, "", prompt)) {
            Ok(r) => r,
            Err(_) => return fail(None, "synthesizer_unavailable"),
        };
    let query = response.trim();
    if query.is_empty() {
        return fail(None, "empty_synthesis");
    }

    let mut parents = seed.provenance.parents.clone();
    parents.push(seed.id.clone());
    let mut child = InstructionRecord::new(child_id, vec![Turn::user(query)]);
    child.provenance = Provenance {
        kind: ProvenanceKind::Evolved,
        parents,
    };
    child.source_dataset = seed.source_dataset.clone();

    // Step 2: judge validation, reject-by-default.
    match validate_instruction(query, gateway, templates) {
        (Verdict::Fail, reason) => {
            return fail(Some(child), reason.as_deref().unwrap_or("judge_rejected"))
        }
        (Verdict::Pass, _) => {}
    }

    // Step 3: multi-turn expansion.
    match expand_multi_turn(&mut child, rounds_drawn, gateway, templates) {
        ExpandOutcome::Complete(rounds) => EvolutionRecord {
            child: Some(child),
            parent_id: seed.id.clone(),
            dimension,
            verdict: Verdict::Pass,
            rounds: Some(rounds),
            failure_reason: None,
            truncated: false,
        },
        ExpandOutcome::Truncated(rounds) => EvolutionRecord {
            child: Some(child),
            parent_id: seed.id.clone(),
            dimension,
            verdict: Verdict::Pass,
            rounds: Some(rounds),
            failure_reason: None,
            truncated: true,
        },
        ExpandOutcome::Failed => fail(Some(child), "dialogue_failure"),
    }
}

pub enum ExpandOutcome {
    /// All drawn rounds completed.
    Complete(u8),
    /// Generation failed mid-dialogue; kept the completed rounds.
    Truncated(u8),
    Failed,
}

/// Judge a candidate query. Only an explicit PASS token passes; any
/// other response or a judge transport failure rejects.
pub fn validate_instruction(
    query: &str,
    gateway: &Gateway,
    templates: &TemplateSet,
) -> (Verdict, Option<String>) {
    let prompt = match templates.render("judge.v1", &[("instruction", query)]) {
        Ok(p) => p,
        Err(e) => return (Verdict::Fail, Some(format!("template: {e}"))),
    };
    match gateway.chat_complete(&ChatRequest::new(ModelRole::Judge, "", prompt)) {
        Ok(response) => {
            if response.trim().eq_ignore_ascii_case("PASS") {
                (Verdict::Pass, None)
            } else {
                (Verdict::Fail, Some("judge_rejected".to_string()))
            }
        }
        Err(_) => (Verdict::Fail, Some("judge_unavailable".to_string())),
    }
}

/// Grow the child's dialogue to `rounds` user/assistant rounds. The
/// child arrives with a single user turn; each round appends the
/// assistant reply and, while rounds remain, the next user query.
pub fn expand_multi_turn(
    child: &mut InstructionRecord,
    rounds: u8,
    gateway: &Gateway,
    templates: &TemplateSet,
) -> ExpandOutcome {
    let mut completed: u8 = 0;
    for round in 1..=rounds {
        let dialogue = child.flatten_dialogue();
        let reply = templates
            .render("dialogue_reply.v1", &[("dialogue", &dialogue)])
            .ok()
            .and_then(|p| {
                gateway
                    .chat_complete(&ChatRequest::new(ModelRole::Synthesizer, "", p))
                    .ok()
            })
            .map(|r| r.trim().to_string())
            .filter(|r| !r.is_empty());
        match reply {
            Some(text) => child.turns.push(Turn::assistant(text)),
            None => {
                // Dangling user turn from the previous follow-up.
                if child.turns.len() % 2 == 1 && completed >= 1 {
                    child.turns.pop();
                }
                return if completed >= 1 {
                    ExpandOutcome::Truncated(completed)
                } else {
                    ExpandOutcome::Failed
                };
            }
        }
        completed = round;
        if round < rounds {
            let dialogue = child.flatten_dialogue();
            let followup = templates
                .render("dialogue_followup.v1", &[("dialogue", &dialogue)])
                .ok()
                .and_then(|p| {
                    gateway
                        .chat_complete(&ChatRequest::new(ModelRole::Synthesizer, "", p))
                        .ok()
                })
                .map(|r| r.trim().to_string())
                .filter(|r| !r.is_empty());
            match followup {
                Some(text) => child.turns.push(Turn::user(text)),
                None => return ExpandOutcome::Truncated(completed),
            }
        }
    }
    ExpandOutcome::Complete(completed)
}

#[derive(Debug, Default)]
pub struct EvolutionOutcome {
    pub log: Vec<EvolutionRecord>,
    /// Valid children, in deterministic order.
    pub children: Vec<InstructionRecord>,
}

/// Run the evolution stage over the seed set for the configured number
/// of generations. Generation g evolves the passing children of
/// generation g-1.
pub fn evolve_corpus(
    seeds: &[InstructionRecord],
    gateway: &Gateway,
    templates: &TemplateSet,
    params: &EvolutionParams,
    global_seed: u64,
) -> Result<EvolutionOutcome> {
    params.validate()?;
    let mut outcome = EvolutionOutcome::default();
    let mut current: Vec<InstructionRecord> = seeds.to_vec();

    for generation in 1..=params.generations {
        let records: Vec<EvolutionRecord> = current
            .par_iter()
            .flat_map_iter(|seed| {
                (0..params.children_per_seed).map(move |j| (seed, j))
            })
            .map(|(seed, j)| {
                let child_id = format!("{}::e{generation}.{j}", seed.id);
                let mut rng = derive_rng(global_seed, &child_id);
                evolve_instruction(seed, child_id, &mut rng, gateway, templates, params)
            })
            .collect();

        current = records
            .iter()
            .filter(|r| r.verdict == Verdict::Pass)
            .filter_map(|r| r.child.clone())
            .collect();
        outcome.log.extend(records);
        outcome.children.extend(current.iter().cloned());
    }
    Ok(outcome)
}

pub fn save_log(log: &[EvolutionRecord], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for record in log {
        serde_json::to_writer(&mut w, record)
            .map_err(|e| Error::data_at(path, format!("serialize evolution record: {e}")))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_log(path: &Path) -> Result<Vec<EvolutionRecord>> {
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
