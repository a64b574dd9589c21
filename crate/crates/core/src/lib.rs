//! Deterministic algorithms for instruction-corpus curation.
//!
//! This crate holds the pure, IO-free parts of the curation pipeline:
//! cosine-space density clustering, similarity-threshold tag merging,
//! seed-selection criteria, 2D projection, grid-histogram statistics
//! (spatial entropy, coverage), tag co-occurrence graphs with power-law
//! degree fitting, and small response parsers.
//!
//! Everything here is deterministic: identical inputs (including RNG
//! seeds) produce identical outputs regardless of platform or thread
//! schedule. The crate is `no_std` with `alloc` so the algorithms can be
//! embedded anywhere; all IO, model calls, and file formats live in the
//! companion `curator` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dbscan;
pub mod graph;
pub mod grid;
pub mod merge;
pub mod metrics;
pub mod parse;
pub mod powerlaw;
pub mod project;
pub mod select;
pub mod similarity;

pub use dbscan::{dbscan_cosine, DbscanError, NOISE};
pub use graph::{build_cooccurrence, CoOccurrenceGraph};
pub use grid::{grid_histogram, Bounds, GridError, GridHistogram};
pub use merge::{
    apply_frequency_filter, merge_by_threshold, merge_groups_by_dbscan, FilterOutcome,
    MergeError, MergeGroup, MergeRule,
};
pub use metrics::depth_metric;
pub use powerlaw::{fit_power_law, FitError, PowerLawFit};
pub use project::{project_2d, Projection, ProjectionError, ProjectionMethod, TsneParams};
pub use similarity::{cosine_distance, cosine_similarity};
