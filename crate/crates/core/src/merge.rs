//! Tag merging: similarity-threshold grouping, DBSCAN refinement, and
//! frequency filtering.
//!
//! Threshold merging connects two tags when their embedding cosine
//! similarity reaches `lambda` and takes the connected components of
//! that graph, so group membership does not depend on input order. The
//! representative of a group is always the member with the highest
//! pre-merge frequency, ties broken by the lexicographically smallest
//! name.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::dbscan::{dbscan_cosine, DbscanError};
use crate::similarity::cosine_similarity;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MergeError {
    /// `lambda` must lie in (0, 1].
    InvalidLambda,
    /// Tag list and embedding list must be aligned.
    LengthMismatch { tags: usize, embeddings: usize },
    /// Every embedding must share one dimensionality.
    DimensionMismatch { expected: usize, found: usize },
    /// Tag names must be unique.
    DuplicateTag(String),
    /// Error from the DBSCAN refinement step.
    Dbscan(DbscanError),
}

impl fmt::Display for MergeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MergeError::InvalidLambda => write!(f, "lambda must lie in (0, 1]"),
            MergeError::LengthMismatch { tags, embeddings } => {
                write!(f, "{tags} tags but {embeddings} embeddings")
            }
            MergeError::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            MergeError::DuplicateTag(t) => write!(f, "duplicate tag {t:?}"),
            MergeError::Dbscan(e) => write!(f, "dbscan: {e}"),
        }
    }
}

impl From<DbscanError> for MergeError {
    fn from(e: DbscanError) -> Self {
        MergeError::Dbscan(e)
    }
}

/// How a group was formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeRule {
    Threshold,
    Dbscan,
}

/// A set of tags merged into one vocabulary entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeGroup {
    /// Member with the highest pre-merge frequency (ties: smallest name).
    pub representative: String,
    /// All members, including the representative, with their pre-merge
    /// frequencies.
    pub members: BTreeMap<String, u64>,
    pub rule: MergeRule,
}

impl MergeGroup {
    pub fn singleton(name: String, frequency: u64) -> Self {
        let mut members = BTreeMap::new();
        members.insert(name.clone(), frequency);
        MergeGroup {
            representative: name,
            members,
            rule: MergeRule::Threshold,
        }
    }

    /// Merged frequency: sum of member pre-merge frequencies.
    pub fn frequency(&self) -> u64 {
        self.members.values().sum()
    }

    fn recompute_representative(&mut self) {
        // BTreeMap iterates in ascending name order, so keeping the first
        // maximum implements the lexicographic tie-break.
        let mut best: Option<(&String, u64)> = None;
        for (name, &freq) in &self.members {
            match best {
                Some((_, bf)) if freq <= bf => {}
                _ => best = Some((name, freq)),
            }
        }
        if let Some((name, _)) = best {
            self.representative = name.clone();
        }
    }
}

struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            // Attach the larger root to the smaller so component roots are
            // the minimum index, independent of union order.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Group `tags` by the connected components of the graph with an edge
/// wherever pairwise cosine similarity is at least `lambda`.
///
/// `tags[i]` is `(name, pre-merge frequency)` and pairs with
/// `embeddings[i]`. Groups are returned sorted by representative.
pub fn merge_by_threshold(
    tags: &[(String, u64)],
    embeddings: &[Vec<f64>],
    lambda: f64,
) -> Result<Vec<MergeGroup>, MergeError> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(MergeError::InvalidLambda);
    }
    if tags.len() != embeddings.len() {
        return Err(MergeError::LengthMismatch {
            tags: tags.len(),
            embeddings: embeddings.len(),
        });
    }
    if let Some(first) = embeddings.first() {
        let dim = first.len();
        for e in embeddings {
            if e.len() != dim {
                return Err(MergeError::DimensionMismatch {
                    expected: dim,
                    found: e.len(),
                });
            }
        }
    }
    {
        let mut seen = BTreeMap::new();
        for (name, _) in tags {
            if seen.insert(name, ()).is_some() {
                return Err(MergeError::DuplicateTag(name.clone()));
            }
        }
    }

    let n = tags.len();
    let mut dsu = Dsu::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            if cosine_similarity(&embeddings[i], &embeddings[j]) >= lambda {
                dsu.union(i, j);
            }
        }
    }

    let mut by_root: BTreeMap<usize, MergeGroup> = BTreeMap::new();
    for (i, (name, freq)) in tags.iter().enumerate() {
        let root = dsu.find(i);
        by_root
            .entry(root)
            .or_insert_with(|| MergeGroup {
                representative: String::new(),
                members: BTreeMap::new(),
                rule: MergeRule::Threshold,
            })
            .members
            .insert(name.clone(), *freq);
    }

    let mut groups: Vec<MergeGroup> = by_root.into_values().collect();
    for g in &mut groups {
        g.recompute_representative();
    }
    groups.sort_by(|a, b| a.representative.cmp(&b.representative));
    Ok(groups)
}

/// Refine threshold groups by clustering their representatives with
/// DBSCAN over cosine distance; every cluster collapses into a single
/// group. Noise representatives keep their group unchanged.
///
/// `rep_embeddings[i]` is the embedding of `groups[i].representative`.
pub fn merge_groups_by_dbscan(
    groups: Vec<MergeGroup>,
    rep_embeddings: &[Vec<f64>],
    eps: f64,
    min_samples: usize,
) -> Result<Vec<MergeGroup>, MergeError> {
    if groups.len() != rep_embeddings.len() {
        return Err(MergeError::LengthMismatch {
            tags: groups.len(),
            embeddings: rep_embeddings.len(),
        });
    }
    let labels = dbscan_cosine(rep_embeddings, eps, min_samples)?;

    let mut merged: BTreeMap<i64, MergeGroup> = BTreeMap::new();
    let mut untouched: Vec<MergeGroup> = Vec::new();
    let mut cluster_sizes: BTreeMap<i64, usize> = BTreeMap::new();
    for &l in &labels {
        if l >= 0 {
            *cluster_sizes.entry(l).or_insert(0) += 1;
        }
    }

    for (group, &label) in groups.into_iter().zip(labels.iter()) {
        if label < 0 || cluster_sizes[&label] < 2 {
            untouched.push(group);
            continue;
        }
        match merged.get_mut(&label) {
            None => {
                let mut g = group;
                g.rule = MergeRule::Dbscan;
                merged.insert(label, g);
            }
            Some(acc) => {
                acc.members.extend(group.members);
            }
        }
    }

    let mut out: Vec<MergeGroup> = merged.into_values().chain(untouched).collect();
    for g in &mut out {
        g.recompute_representative();
    }
    out.sort_by(|a, b| a.representative.cmp(&b.representative));
    Ok(out)
}

/// Result of the frequency filter: retained entries and the noisy tail
/// that was dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterOutcome {
    pub retained: Vec<MergeGroup>,
    pub dropped: Vec<MergeGroup>,
}

/// Drop groups whose merged frequency is strictly below `min_freq`.
pub fn apply_frequency_filter(groups: Vec<MergeGroup>, min_freq: u64) -> FilterOutcome {
    let (retained, dropped) = groups
        .into_iter()
        .partition(|g| g.frequency() >= min_freq);
    FilterOutcome { retained, dropped }
}
