//! Undirected tag co-occurrence graph.
//!
//! Every record contributes one increment per unordered pair of tags it
//! contains. A node's degree is its number of distinct neighbors, not
//! the sum of edge weights.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;

/// Undirected graph of tags with co-occurrence counts on the edges.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CoOccurrenceGraph {
    nodes: BTreeSet<String>,
    /// Keyed by the ordered pair `(min, max)`.
    weights: BTreeMap<(String, String), u64>,
    adjacency: BTreeMap<String, BTreeSet<String>>,
}

/// Build the co-occurrence graph from per-record tag sets. Tags that
/// never co-occur still appear as isolated (degree 0) nodes.
pub fn build_cooccurrence<'a, I>(records: I) -> CoOccurrenceGraph
where
    I: IntoIterator<Item = &'a BTreeSet<String>>,
{
    let mut g = CoOccurrenceGraph::default();
    for tags in records {
        for t in tags {
            g.nodes.insert(t.clone());
        }
        let list: alloc::vec::Vec<&String> = tags.iter().collect();
        for i in 0..list.len() {
            for j in (i + 1)..list.len() {
                g.add_edge(list[i], list[j]);
            }
        }
    }
    g
}

impl CoOccurrenceGraph {
    fn add_edge(&mut self, a: &String, b: &String) {
        let key = if a <= b {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        };
        *self.weights.entry(key).or_insert(0) += 1;
        self.adjacency
            .entry(a.clone())
            .or_default()
            .insert(b.clone());
        self.adjacency
            .entry(b.clone())
            .or_default()
            .insert(a.clone());
    }

    pub fn nodes(&self) -> &BTreeSet<String> {
        &self.nodes
    }

    pub fn edge_count(&self) -> usize {
        self.weights.len()
    }

    pub fn edge_weight(&self, a: &str, b: &str) -> Option<u64> {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.weights
            .get(&(String::from(key.0), String::from(key.1)))
            .copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, u64)> {
        self.weights
            .iter()
            .map(|((a, b), w)| (a.as_str(), b.as_str(), *w))
    }

    /// Number of distinct co-occurring tags.
    pub fn degree(&self, tag: &str) -> usize {
        self.adjacency.get(tag).map_or(0, |n| n.len())
    }

    pub fn degrees(&self) -> BTreeMap<String, usize> {
        self.nodes
            .iter()
            .map(|t| (t.clone(), self.degree(t)))
            .collect()
    }

    pub fn degree_sum(&self) -> usize {
        self.nodes.iter().map(|t| self.degree(t)).sum()
    }

    /// Frequency of each degree value across nodes.
    pub fn degree_spectrum(&self) -> BTreeMap<usize, u64> {
        let mut spectrum: BTreeMap<usize, u64> = BTreeMap::new();
        for t in &self.nodes {
            *spectrum.entry(self.degree(t)).or_insert(0) += 1;
        }
        spectrum
    }
}
