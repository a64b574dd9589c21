//! Fine-grained tagging, domain-category induction, and tag-to-domain
//! mapping.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use curator_core::parse::{parse_angle_bracket_list, parse_tag_list};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::gateway::{ChatRequest, Gateway, ModelRole};
use crate::normalize::TagVocabulary;
use crate::templates::TemplateSet;

/// Reserved fallback category for tags that map to nothing.
pub const OTHER_CATEGORY: &str = "Other";

/// Tags for one instruction as returned by the tagger, before
/// normalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTagAssignment {
    pub id: String,
    pub tags: Vec<String>,
}

#[derive(Debug, Default)]
pub struct TaggingOutcome {
    /// One assignment per record, in corpus order. Untagged records get
    /// an empty tag list.
    pub assignments: Vec<RawTagAssignment>,
    /// Ids whose responses stayed unparseable after one reprompt.
    pub untagged: Vec<String>,
    pub prompt_hash: String,
}

/// Tag every record through the gateway. Calls run in parallel up to
/// the gateway's in-flight cap; results are assembled in corpus order.
pub fn generate_fine_tags(
    corpus: &Corpus,
    gateway: &Gateway,
    templates: &TemplateSet,
) -> Result<TaggingOutcome> {
    let prompt_hash = templates.hash("tagger.v1")?;

    let tagged: Vec<Result<RawTagAssignment>> = corpus
        .records()
        .par_iter()
        .map(|record| {
            let dialogue = record.flatten_dialogue();
            let prompt = templates.render("tagger.v1", &[("dialogue", &dialogue)])?;
            let tags = request_tags(gateway, &prompt)?;
            let tags = match tags {
                Some(t) => t,
                None => {
                    // One reprompt with an explicit format reminder.
                    let reprompt = format!(
                        "{prompt}\n\nReturn a comma-separated list of tags and nothing else."
                    );
                    request_tags(gateway, &reprompt)?.unwrap_or_default()
                }
            };
            Ok(RawTagAssignment {
                id: record.id.clone(),
                tags,
            })
        })
        .collect();

    let mut outcome = TaggingOutcome {
        prompt_hash,
        ..TaggingOutcome::default()
    };
    for result in tagged {
        let assignment = result?;
        if assignment.tags.is_empty() {
            outcome.untagged.push(assignment.id.clone());
        }
        outcome.assignments.push(assignment);
    }
    Ok(outcome)
}

fn request_tags(gateway: &Gateway, prompt: &str) -> Result<Option<Vec<String>>> {
    let request = ChatRequest::new(ModelRole::Tagger, "", prompt);
    let response = gateway.chat_complete(&request)?;
    let tags = parse_tag_list(&response);
    Ok(if tags.is_empty() { None } else { Some(tags) })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainCategory {
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DomainCategorySet {
    pub categories: Vec<DomainCategory>,
}

impl DomainCategorySet {
    pub fn names(&self) -> Vec<&str> {
        self.categories.iter().map(|c| c.name.as_str()).collect()
    }

    /// Canonical spelling for a case-insensitive name match.
    pub fn canonical(&self, name: &str) -> Option<&str> {
        self.categories
            .iter()
            .find(|c| c.name.eq_ignore_ascii_case(name.trim()))
            .map(|c| c.name.as_str())
    }

    /// The classification standard block embedded in mapping prompts.
    pub fn standard_block(&self) -> String {
        self.categories
            .iter()
            .map(|c| format!("- {}: {}", c.name, c.description))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Summarize the `k` most frequent vocabulary tags (ties broken
/// lexicographically) into domain-level categories. Fewer than two
/// parsed categories is fatal: the taxonomy would be degenerate.
pub fn induce_domain_categories(
    vocab: &TagVocabulary,
    k: usize,
    gateway: &Gateway,
    templates: &TemplateSet,
) -> Result<DomainCategorySet> {
    let mut tags: Vec<(&str, u64)> = vocab
        .entries
        .iter()
        .map(|(id, e)| (id.as_str(), e.frequency))
        .collect();
    // Highest frequency first; lexicographic within a frequency so the
    // cut at rank k is deterministic.
    tags.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    tags.truncate(k.min(tags.len()));

    let block = tags
        .iter()
        .map(|(name, freq)| format!("{name}\t{freq}"))
        .collect::<Vec<_>>()
        .join("\n");
    let prompt = templates.render("domain_induce.v1", &[("tags", &block)])?;
    let response = gateway.chat_complete(&ChatRequest::new(ModelRole::Oracle, "", prompt))?;

    let set = parse_category_lines(&response);
    if set.categories.len() < 2 {
        return Err(Error::data(format!(
            "domain induction produced {} categories; at least 2 required",
            set.categories.len()
        )));
    }
    Ok(set)
}

/// Parse "Name: description" lines, tolerating bullets and numbering.
/// Duplicate names (case-insensitive) keep the first occurrence.
pub fn parse_category_lines(response: &str) -> DomainCategorySet {
    let mut set = DomainCategorySet::default();
    for line in response.lines() {
        let mut line = line.trim();
        for prefix in ["- ", "* "] {
            if let Some(rest) = line.strip_prefix(prefix) {
                line = rest.trim();
            }
        }
        let digits = line.chars().take_while(|c| c.is_ascii_digit()).count();
        if digits > 0 {
            let rest = &line[digits..];
            if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
                line = r.trim();
            }
        }
        if line.is_empty() {
            continue;
        }
        let (name, description) = match line.split_once(':') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (line, ""),
        };
        if name.is_empty() {
            continue;
        }
        if set.canonical(name).is_none() {
            set.categories.push(DomainCategory {
                name: name.to_string(),
                description: description.to_string(),
            });
        }
    }
    set
}

/// Map one fine-grained tag onto categories. Unknown names in the
/// response are dropped; an empty result is retried once and then falls
/// back to the reserved "Other" category, so the result is always a
/// non-empty subset of `cats` plus possibly "Other".
pub fn map_tag_to_domain(
    tag: &str,
    cats: &DomainCategorySet,
    gateway: &Gateway,
    templates: &TemplateSet,
) -> Result<BTreeSet<String>> {
    if cats.categories.is_empty() {
        return Err(Error::data("cannot map tags onto an empty category set"));
    }
    let standard = cats.standard_block();
    let prompt = templates.render(
        "domain_map.v1",
        &[("standard", &standard), ("tag", tag)],
    )?;
    for attempt in 0..2 {
        let user = if attempt == 0 {
            prompt.clone()
        } else {
            format!("{prompt}\n\nUse only names from the classification standard.")
        };
        let response = gateway.chat_complete(&ChatRequest::new(ModelRole::Tagger, "", user))?;
        let names: BTreeSet<String> = parse_angle_bracket_list(&response)
            .into_iter()
            .filter_map(|raw| cats.canonical(&raw).map(String::from))
            .collect();
        if !names.is_empty() {
            return Ok(names);
        }
    }
    Ok(BTreeSet::from([OTHER_CATEGORY.to_string()]))
}

/// Persist assignments as JSONL `{"id", "tags"}`.
pub fn save_assignments(assignments: &[RawTagAssignment], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for a in assignments {
        serde_json::to_writer(&mut w, a)
            .map_err(|e| Error::data_at(path, format!("serialize assignment: {e}")))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_assignments(path: &Path) -> Result<Vec<RawTagAssignment>> {
    let reader = BufReader::new(
        File::open(path).map_err(|e| Error::data_at(path, format!("cannot open: {e}")))?,
    );
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let a: RawTagAssignment = serde_json::from_str(&line)
            .map_err(|e| Error::data_at(path, format!("line {}: {e}", idx + 1)))?;
        out.push(a);
    }
    Ok(out)
}
