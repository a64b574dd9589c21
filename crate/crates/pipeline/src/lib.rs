//! Instruction-corpus curation pipeline.
//!
//! Stages: ingest -> tag -> normalize -> select -> evolve -> diagnose ->
//! dedup -> analyze, wired together by the `curator` binary. Stages
//! communicate only through persisted artifacts, so each is
//! independently re-runnable; with the mock gateway and fixed seeds a
//! whole run is byte-reproducible.

pub mod analytics;
pub mod config;
pub mod corpus;
pub mod diagnosis;
pub mod error;
pub mod evolution;
pub mod gateway;
pub mod leakage;
pub mod manifest;
pub mod normalize;
pub mod plot;
pub mod selection;
pub mod stages;
pub mod tagging;
pub mod templates;

pub use error::{Error, Result};
