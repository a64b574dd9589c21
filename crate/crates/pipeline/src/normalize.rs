//! Raw-tag normalization into the fine-grained vocabulary:
//! similarity-threshold merge, DBSCAN refinement of the
//! representatives, then the frequency filter. Every instruction's tag
//! list is rewritten through the resulting remap.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use curator_core::merge::{
    apply_frequency_filter, merge_by_threshold, merge_groups_by_dbscan, MergeGroup,
};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::gateway::Gateway;
use crate::tagging::RawTagAssignment;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VocabParams {
    /// Cosine-similarity threshold for merging.
    pub lambda: f64,
    /// DBSCAN neighborhood radius (cosine distance).
    pub eps: f64,
    pub min_samples: usize,
    /// Merged entries rarer than this are dropped as noise.
    pub min_freq: u64,
}

impl Default for VocabParams {
    fn default() -> Self {
        VocabParams {
            lambda: 0.91,
            eps: 0.47,
            min_samples: 2,
            min_freq: 100,
        }
    }
}

impl VocabParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::config("normalization.lambda must lie in (0, 1]"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::config("normalization.eps must be positive"));
        }
        if self.min_samples < 1 {
            return Err(Error::config("normalization.min_samples must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabEntry {
    /// Canonical spelling: the member with the highest pre-merge
    /// frequency.
    pub surface: String,
    /// Merged frequency: sum of member pre-merge frequencies.
    pub frequency: u64,
    /// All merged spellings, including the surface.
    pub merged_aliases: BTreeSet<String>,
    /// Domain categories, filled by the domain-mapping pass.
    #[serde(default)]
    pub domain_tags: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagVocabulary {
    /// Keyed by tag id (= the surface form).
    pub entries: BTreeMap<String, VocabEntry>,
    pub params: VocabParams,
}

impl TagVocabulary {
    pub fn frequency_of(&self, tag_id: &str) -> Option<u64> {
        self.entries.get(tag_id).map(|e| e.frequency)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Vocabulary plus the raw-tag remap, as persisted to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationOutcome {
    pub vocabulary: TagVocabulary,
    /// Raw tag -> retained tag id, or `None` when the tag's merged
    /// entry fell below the frequency filter.
    pub remap: BTreeMap<String, Option<String>>,
    /// Total raw tag occurrences, for the conservation check.
    pub total_raw_occurrences: u64,
}

impl NormalizationOutcome {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::data(format!("serialize vocabulary: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::data_at(path, format!("cannot read vocabulary: {e}")))?;
        serde_json::from_str(&text).map_err(|e| Error::data_at(path, format!("parse: {e}")))
    }
}

/// Count raw-tag frequencies (a tag counts once per assignment) and run
/// the three-step normalization. Returns the vocabulary and the total
/// remap.
pub fn normalize_vocabulary(
    assignments: &[RawTagAssignment],
    gateway: &Gateway,
    params: VocabParams,
) -> Result<NormalizationOutcome> {
    params.validate()?;

    let mut frequencies: BTreeMap<String, u64> = BTreeMap::new();
    for assignment in assignments {
        for tag in &assignment.tags {
            *frequencies.entry(tag.clone()).or_insert(0) += 1;
        }
    }
    let total_raw_occurrences: u64 = frequencies.values().sum();

    let tags: Vec<(String, u64)> = frequencies
        .iter()
        .map(|(t, f)| (t.clone(), *f))
        .collect();

    if tags.is_empty() {
        return Ok(NormalizationOutcome {
            vocabulary: TagVocabulary {
                entries: BTreeMap::new(),
                params,
            },
            remap: BTreeMap::new(),
            total_raw_occurrences,
        });
    }

    let texts: Vec<String> = tags.iter().map(|(t, _)| t.clone()).collect();
    let embeddings = embed_chunked(gateway, &texts)?;
    let by_tag: BTreeMap<&str, &Vec<f64>> = texts
        .iter()
        .map(String::as_str)
        .zip(embeddings.iter())
        .collect();

    let groups = merge_by_threshold(&tags, &embeddings, params.lambda)
        .map_err(|e| Error::data(format!("threshold merge: {e}")))?;

    let rep_embeddings: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            by_tag
                .get(g.representative.as_str())
                .map(|v| (*v).clone())
                .ok_or_else(|| {
                    Error::data(format!("missing embedding for {:?}", g.representative))
                })
        })
        .collect::<Result<_>>()?;
    let groups = merge_groups_by_dbscan(groups, &rep_embeddings, params.eps, params.min_samples)
        .map_err(|e| Error::data(format!("dbscan merge: {e}")))?;

    let filtered = apply_frequency_filter(groups, params.min_freq);

    let mut entries = BTreeMap::new();
    let mut remap: BTreeMap<String, Option<String>> = BTreeMap::new();
    for group in &filtered.retained {
        entries.insert(group.representative.clone(), entry_from(group));
        for alias in group.members.keys() {
            remap.insert(alias.clone(), Some(group.representative.clone()));
        }
    }
    for group in &filtered.dropped {
        for alias in group.members.keys() {
            remap.insert(alias.clone(), None);
        }
    }

    Ok(NormalizationOutcome {
        vocabulary: TagVocabulary { entries, params },
        remap,
        total_raw_occurrences,
    })
}

fn entry_from(group: &MergeGroup) -> VocabEntry {
    VocabEntry {
        surface: group.representative.clone(),
        frequency: group.frequency(),
        merged_aliases: group.members.keys().cloned().collect(),
        domain_tags: BTreeSet::new(),
    }
}

/// Embed in fixed-size chunks so one oversized batch cannot exhaust a
/// provider request limit.
fn embed_chunked(gateway: &Gateway, texts: &[String]) -> Result<Vec<Vec<f64>>> {
    const CHUNK: usize = 64;
    let mut out = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(CHUNK) {
        out.extend(gateway.embed_batch(chunk)?);
    }
    Ok(out)
}

/// Rewrite every record's fine tags through the remap and attach the
/// vocabulary's domain tags.
pub fn rewrite_corpus_tags(
    corpus: &mut Corpus,
    assignments: &[RawTagAssignment],
    outcome: &NormalizationOutcome,
) -> Result<()> {
    let by_id: BTreeMap<&str, &RawTagAssignment> = assignments
        .iter()
        .map(|a| (a.id.as_str(), a))
        .collect();
    for record in corpus.records_mut() {
        let Some(assignment) = by_id.get(record.id.as_str()) else {
            continue;
        };
        let mut fine = BTreeSet::new();
        for raw in &assignment.tags {
            match outcome.remap.get(raw) {
                Some(Some(id)) => {
                    fine.insert(id.clone());
                }
                Some(None) => {} // dropped by the frequency filter
                None => {
                    return Err(Error::data(format!(
                        "tag {raw:?} of record {:?} missing from remap",
                        record.id
                    )));
                }
            }
        }
        let mut domains = BTreeSet::new();
        for id in &fine {
            if let Some(entry) = outcome.vocabulary.entries.get(id) {
                domains.extend(entry.domain_tags.iter().cloned());
            }
        }
        record.fine_tags = fine;
        record.domain_tags = domains;
    }
    Ok(())
}
