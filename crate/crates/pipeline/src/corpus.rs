//! Canonical data model and JSONL persistence.
//!
//! A corpus is one JSON object per line. Iteration order is stable and
//! equal to file order; record ids are unique. Loss values are sidecar
//! metadata computed elsewhere and attached by id.

use std::collections::BTreeSet;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
}

impl Turn {
    pub fn user(text: impl Into<String>) -> Self {
        Turn {
            role: Role::User,
            text: text.into(),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Turn {
            role: Role::Assistant,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProvenanceKind {
    Seed,
    Evolved,
    Remedial,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: ProvenanceKind,
    /// Ancestor ids, oldest first. Non-empty for evolved and remedial
    /// records.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parents: Vec<String>,
}

impl Default for Provenance {
    fn default() -> Self {
        Provenance {
            kind: ProvenanceKind::Seed,
            parents: Vec::new(),
        }
    }
}

/// One multi-turn query-response dialogue plus tags, losses, and
/// provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub id: String,
    pub turns: Vec<Turn>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub fine_tags: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub domain_tags: BTreeSet<String>,
    /// Token-level average cross-entropy under the base model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_loss: Option<f64>,
    /// Same, under the fine-tuned model. Present only with `base_loss`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ft_loss: Option<f64>,
    /// Difficulty score 0..=4.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<u8>,
    #[serde(default)]
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub source_dataset: String,
}

impl InstructionRecord {
    pub fn new(id: impl Into<String>, turns: Vec<Turn>) -> Self {
        InstructionRecord {
            id: id.into(),
            turns,
            fine_tags: BTreeSet::new(),
            domain_tags: BTreeSet::new(),
            base_loss: None,
            ft_loss: None,
            difficulty: None,
            provenance: Provenance::default(),
            source_dataset: String::new(),
        }
    }

    /// Check the record invariants.
    pub fn validate(&self) -> Result<()> {
        if self.turns.is_empty() {
            return Err(Error::data(format!("record {:?}: no turns", self.id)));
        }
        for (i, turn) in self.turns.iter().enumerate() {
            if turn.text.trim().is_empty() {
                return Err(Error::data(format!(
                    "record {:?}: turn {i} is empty",
                    self.id
                )));
            }
            let expected = if i % 2 == 0 { Role::User } else { Role::Assistant };
            if turn.role != expected {
                return Err(Error::data(format!(
                    "record {:?}: turn {i} breaks user/assistant alternation",
                    self.id
                )));
            }
        }
        if self.ft_loss.is_some() && self.base_loss.is_none() {
            return Err(Error::data(format!(
                "record {:?}: ft_loss without base_loss",
                self.id
            )));
        }
        for (name, loss) in [("base_loss", self.base_loss), ("ft_loss", self.ft_loss)] {
            if let Some(l) = loss {
                if !(l >= 0.0) || !l.is_finite() {
                    return Err(Error::data(format!(
                        "record {:?}: {name} must be a nonnegative finite number, got {l}",
                        self.id
                    )));
                }
            }
        }
        if let Some(d) = self.difficulty {
            if d > 4 {
                return Err(Error::data(format!(
                    "record {:?}: difficulty {d} outside 0..=4",
                    self.id
                )));
            }
        }
        if matches!(
            self.provenance.kind,
            ProvenanceKind::Evolved | ProvenanceKind::Remedial
        ) && self.provenance.parents.is_empty()
        {
            return Err(Error::data(format!(
                "record {:?}: evolved/remedial records need a parent chain",
                self.id
            )));
        }
        Ok(())
    }

    /// Deterministic single-string form of the dialogue:
    /// `"user: <t>\nassistant: <t>\n..."` in turn order.
    pub fn flatten_dialogue(&self) -> String {
        let mut out = String::new();
        for (i, turn) in self.turns.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            match turn.role {
                Role::User => out.push_str("user: "),
                Role::Assistant => out.push_str("assistant: "),
            }
            out.push_str(&turn.text);
        }
        out
    }

    /// User-side text only, for leakage comparison against benchmark
    /// queries.
    pub fn flatten_user_turns(&self) -> String {
        self.turns
            .iter()
            .filter(|t| t.role == Role::User)
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn first_user_text(&self) -> Option<&str> {
        self.turns
            .iter()
            .find(|t| t.role == Role::User)
            .map(|t| t.text.as_str())
    }

    pub fn first_assistant_text(&self) -> Option<&str> {
        self.turns
            .iter()
            .find(|t| t.role == Role::Assistant)
            .map(|t| t.text.as_str())
    }
}

/// Ordered, id-unique collection of records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    records: Vec<InstructionRecord>,
    pub schema_version: u32,
}

impl Corpus {
    pub fn new() -> Self {
        Corpus {
            records: Vec::new(),
            schema_version: SCHEMA_VERSION,
        }
    }

    pub fn from_records(records: Vec<InstructionRecord>) -> Result<Self> {
        let mut corpus = Corpus::new();
        for r in records {
            corpus.push(r)?;
        }
        Ok(corpus)
    }

    pub fn push(&mut self, record: InstructionRecord) -> Result<()> {
        record.validate()?;
        if self.records.iter().any(|r| r.id == record.id) {
            return Err(Error::data(format!("duplicate record id {:?}", record.id)));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[InstructionRecord] {
        &self.records
    }

    pub fn records_mut(&mut self) -> &mut [InstructionRecord] {
        &mut self.records
    }

    pub fn iter(&self) -> std::slice::Iter<'_, InstructionRecord> {
        self.records.iter()
    }

    pub fn get(&self, id: &str) -> Option<&InstructionRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.id.as_str())
    }
}

/// Outcome of loading a corpus file.
#[derive(Debug)]
pub struct LoadOutcome {
    pub corpus: Corpus,
    /// Malformed lines skipped in lenient mode (1-based line numbers).
    pub skipped_lines: Vec<usize>,
}

impl LoadOutcome {
    pub fn skipped(&self) -> usize {
        self.skipped_lines.len()
    }
}

/// Load a JSONL corpus. In strict mode the first malformed line aborts;
/// otherwise malformed lines are skipped and counted. Duplicate ids are
/// always fatal.
pub fn load_corpus(path: &Path, strict: bool) -> Result<LoadOutcome> {
    let file = File::open(path)
        .map_err(|e| Error::data_at(path, format!("cannot open corpus: {e}")))?;
    let reader = BufReader::new(file);

    let mut corpus = Corpus::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut skipped_lines = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::data_at(path, format!("line {line_no}: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: std::result::Result<InstructionRecord, _> = serde_json::from_str(&line);
        let record = match parsed {
            Ok(r) => r,
            Err(e) => {
                if strict {
                    return Err(Error::data_at(path, format!("line {line_no}: {e}")));
                }
                log::warn!("{}: skipping malformed line {line_no}: {e}", path.display());
                skipped_lines.push(line_no);
                continue;
            }
        };
        if let Err(e) = record.validate() {
            if strict {
                return Err(Error::data_at(path, format!("line {line_no}: {e}")));
            }
            log::warn!("{}: skipping invalid record on line {line_no}: {e}", path.display());
            skipped_lines.push(line_no);
            continue;
        }
        if let Some(first) = seen.insert(record.id.clone(), line_no) {
            return Err(Error::data_at(
                path,
                format!(
                    "duplicate id {:?} on line {line_no} (first seen on line {first})",
                    record.id
                ),
            ));
        }
        corpus.records.push(record);
    }

    Ok(LoadOutcome {
        corpus,
        skipped_lines,
    })
}

/// Persist the corpus as JSONL, one record per line, in iteration
/// order.
pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let file = File::create(path)
        .map_err(|e| Error::data_at(path, format!("cannot create file: {e}")))?;
    let mut w = BufWriter::new(file);
    for record in corpus.iter() {
        serde_json::to_writer(&mut w, record)
            .map_err(|e| Error::data_at(path, format!("serialize {:?}: {e}", record.id)))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Merge corpora from several sources, prefixing every id with its
/// source namespace (`"<namespace>/<id>"`) so id collisions across
/// datasets cannot occur.
pub fn merge_namespaced(sources: Vec<(String, Corpus)>) -> Result<Corpus> {
    let mut merged = Corpus::new();
    for (namespace, corpus) in sources {
        for mut record in corpus.records {
            record.id = format!("{namespace}/{}", record.id);
            if record.source_dataset.is_empty() {
                record.source_dataset = namespace.clone();
            }
            merged.push(record)?;
        }
    }
    Ok(merged)
}

/// One line of the loss sidecar file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossSidecarEntry {
    pub id: String,
    pub base_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ft_loss: Option<f64>,
}

#[derive(Debug, Default)]
pub struct AttachOutcome {
    pub attached: usize,
    pub unknown_ids: Vec<String>,
}

/// Attach sidecar losses to matching records. Unknown ids warn (or
/// abort with `strict_ids`); negative losses are always fatal; records
/// absent from the sidecar are left unchanged.
pub fn attach_loss_metadata(
    corpus: &mut Corpus,
    sidecar: &Path,
    strict_ids: bool,
) -> Result<AttachOutcome> {
    let file = File::open(sidecar)
        .map_err(|e| Error::data_at(sidecar, format!("cannot open sidecar: {e}")))?;
    let reader = BufReader::new(file);

    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, r) in corpus.records.iter().enumerate() {
        index.insert(r.id.as_str(), i);
    }
    let index: HashMap<String, usize> =
        index.into_iter().map(|(k, v)| (k.to_string(), v)).collect();

    let mut outcome = AttachOutcome::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: LossSidecarEntry = serde_json::from_str(&line)
            .map_err(|e| Error::data_at(sidecar, format!("line {line_no}: {e}")))?;
        if entry.base_loss < 0.0 || entry.ft_loss.is_some_and(|l| l < 0.0) {
            return Err(Error::data_at(
                sidecar,
                format!("line {line_no}: negative loss for id {:?}", entry.id),
            ));
        }
        match index.get(&entry.id) {
            Some(&i) => {
                let r = &mut corpus.records[i];
                r.base_loss = Some(entry.base_loss);
                r.ft_loss = entry.ft_loss;
                outcome.attached += 1;
            }
            None => {
                if strict_ids {
                    return Err(Error::data_at(
                        sidecar,
                        format!("line {line_no}: id {:?} not in corpus", entry.id),
                    ));
                }
                log::warn!("loss sidecar id {:?} not in corpus", entry.id);
                outcome.unknown_ids.push(entry.id);
            }
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str) -> InstructionRecord {
        InstructionRecord::new(id, vec![Turn::user(format!("question {id}"))])
    }

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn three_line_file_round_trips_in_order() {
        let mut corpus = Corpus::new();
        for id in ["a", "b", "c"] {
            corpus.push(record(id)).unwrap();
        }
        let f = tempfile::NamedTempFile::new().unwrap();
        save_corpus(&corpus, f.path()).unwrap();
        let loaded = load_corpus(f.path(), true).unwrap();
        assert_eq!(loaded.corpus, corpus);
        assert_eq!(loaded.skipped(), 0);
        let ids: Vec<&str> = loaded.corpus.ids().collect();
        assert_eq!(ids, vec!["a", "b", "c"]);
    }

    #[test]
    fn save_is_byte_stable() {
        let mut corpus = Corpus::new();
        corpus.push(record("x")).unwrap();
        let f1 = tempfile::NamedTempFile::new().unwrap();
        let f2 = tempfile::NamedTempFile::new().unwrap();
        save_corpus(&corpus, f1.path()).unwrap();
        let reloaded = load_corpus(f1.path(), true).unwrap().corpus;
        save_corpus(&reloaded, f2.path()).unwrap();
        assert_eq!(
            std::fs::read(f1.path()).unwrap(),
            std::fs::read(f2.path()).unwrap()
        );
    }

    #[test]
    fn lenient_mode_skips_and_counts_malformed_lines() {
        let good = serde_json::to_string(&record("ok1")).unwrap();
        let good2 = serde_json::to_string(&record("ok2")).unwrap();
        let good3 = serde_json::to_string(&record("ok3")).unwrap();
        let good4 = serde_json::to_string(&record("ok4")).unwrap();
        let f = write_lines(&[&good, "{not json", &good2, &good3, &good4]);
        let out = load_corpus(f.path(), false).unwrap();
        assert_eq!(out.corpus.len(), 4);
        assert_eq!(out.skipped(), 1);
        assert_eq!(out.skipped_lines, vec![2]);
    }

    #[test]
    fn strict_mode_aborts_on_malformed_line() {
        let good = serde_json::to_string(&record("ok")).unwrap();
        let f = write_lines(&[&good, "{not json"]);
        let err = load_corpus(f.path(), true).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn duplicate_ids_are_fatal_even_in_lenient_mode() {
        let a = serde_json::to_string(&record("a")).unwrap();
        let f = write_lines(&[&a, &a]);
        let err = load_corpus(f.path(), false).unwrap_err();
        assert!(err.to_string().contains("duplicate id"));
    }

    #[test]
    fn flatten_single_user_turn() {
        let r = record("a");
        assert_eq!(
            InstructionRecord::new("x", vec![Turn::user("hi")]).flatten_dialogue(),
            "user: hi"
        );
        assert_eq!(r.flatten_dialogue(), r.flatten_dialogue());
    }

    #[test]
    fn flatten_preserves_turn_order() {
        let r = InstructionRecord::new(
            "x",
            vec![Turn::user("ask"), Turn::assistant("answer")],
        );
        assert_eq!(r.flatten_dialogue(), "user: ask\nassistant: answer");
    }

    #[test]
    fn validation_rejects_broken_alternation() {
        let r = InstructionRecord::new("x", vec![Turn::assistant("hello")]);
        assert!(r.validate().is_err());
        let r = InstructionRecord::new("x", vec![Turn::user("a"), Turn::user("b")]);
        assert!(r.validate().is_err());
    }

    #[test]
    fn validation_rejects_ft_loss_without_base() {
        let mut r = record("x");
        r.ft_loss = Some(1.0);
        assert!(r.validate().is_err());
        r.base_loss = Some(2.0);
        assert!(r.validate().is_ok());
    }

    #[test]
    fn attach_losses_full_join() {
        let mut corpus = Corpus::new();
        let mut sidecar_lines = Vec::new();
        for i in 0..10 {
            let id = format!("r{i}");
            corpus.push(record(&id)).unwrap();
            sidecar_lines.push(format!(
                r#"{{"id":"{id}","base_loss":{}.5,"ft_loss":0.25}}"#,
                i
            ));
        }
        let refs: Vec<&str> = sidecar_lines.iter().map(|s| s.as_str()).collect();
        let f = write_lines(&refs);
        let out = attach_loss_metadata(&mut corpus, f.path(), false).unwrap();
        assert_eq!(out.attached, 10);
        assert!(corpus.iter().all(|r| r.base_loss.is_some()));
    }

    #[test]
    fn attach_losses_unknown_id_is_lenient_by_default() {
        let mut corpus = Corpus::new();
        corpus.push(record("known")).unwrap();
        let f = write_lines(&[r#"{"id":"ghost","base_loss":1.0}"#]);
        let out = attach_loss_metadata(&mut corpus, f.path(), false).unwrap();
        assert_eq!(out.attached, 0);
        assert_eq!(out.unknown_ids, vec!["ghost".to_string()]);
        assert!(corpus.get("known").unwrap().base_loss.is_none());

        let err = attach_loss_metadata(&mut corpus, f.path(), true).unwrap_err();
        assert!(err.to_string().contains("ghost"));
    }

    #[test]
    fn attach_losses_negative_is_fatal() {
        let mut corpus = Corpus::new();
        corpus.push(record("a")).unwrap();
        let f = write_lines(&[r#"{"id":"a","base_loss":-0.1}"#]);
        let err = attach_loss_metadata(&mut corpus, f.path(), false).unwrap_err();
        assert!(err.to_string().contains("negative loss"));
    }

    #[test]
    fn namespaced_merge_prefixes_ids() {
        let mut a = Corpus::new();
        a.push(record("1")).unwrap();
        let mut b = Corpus::new();
        b.push(record("1")).unwrap();
        let merged =
            merge_namespaced(vec![("alpha".to_string(), a), ("beta".to_string(), b)]).unwrap();
        let ids: Vec<&str> = merged.ids().collect();
        assert_eq!(ids, vec!["alpha/1", "beta/1"]);
        assert_eq!(merged.get("alpha/1").unwrap().source_dataset, "alpha");
    }
}
