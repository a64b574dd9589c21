//! Pipeline configuration. Every stage parameter lives here with its
//! published default, loadable from a TOML file and overridable from
//! the CLI.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analytics::AnalyticsParams;
use crate::error::{Error, Result};
use crate::evolution::EvolutionParams;
use crate::gateway::GatewayConfig;
use crate::normalize::VocabParams;
use crate::selection::SelectionParams;
use crate::templates::hex_digest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineSection {
    pub out_dir: PathBuf,
    /// Global RNG seed; every stage derives its own stream from it.
    pub seed: u64,
    /// Abort ingestion on the first malformed line.
    pub strict_ingest: bool,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection {
            out_dir: PathBuf::from("out"),
            seed: 42,
            strict_ingest: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaggingSection {
    /// How many top-frequency tags feed domain induction.
    pub top_k: usize,
}

impl Default for TaggingSection {
    fn default() -> Self {
        TaggingSection { top_k: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosisSection {
    /// Diagnosis set size (clamped to the eligible seed count).
    pub set_size: usize,
    /// Remedial instructions requested per deficient case.
    pub per_case: usize,
    /// Sidecar of fine-tuned-model responses; generated live through
    /// the synthesizer role when absent.
    pub responses: Option<PathBuf>,
}

impl Default for DiagnosisSection {
    fn default() -> Self {
        DiagnosisSection {
            set_size: 8,
            per_case: 2,
            responses: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LeakageSection {
    /// Cosine-similarity removal threshold.
    pub tau: f64,
    /// Benchmark query files (JSONL of {"query"}).
    pub benchmarks: Vec<PathBuf>,
}

impl Default for LeakageSection {
    fn default() -> Self {
        LeakageSection {
            tau: 0.85,
            benchmarks: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub pipeline: PipelineSection,
    pub gateway: GatewayConfig,
    pub tagging: TaggingSection,
    pub normalization: VocabParams,
    pub selection: SelectionParams,
    pub evolution: EvolutionParams,
    pub diagnosis: DiagnosisSection,
    pub leakage: LeakageSection,
    pub analytics: AnalyticsParams,
    /// Directory of template overrides (`<name>.txt`).
    pub templates_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let config: PipelineConfig = toml::from_str(&text)
            .map_err(|e| Error::config(format!("bad config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.gateway.validate()?;
        self.normalization.validate()?;
        self.evolution.validate()?;
        if !(self.leakage.tau > 0.0 && self.leakage.tau <= 1.0) {
            return Err(Error::config("leakage.tau must lie in (0, 1]"));
        }
        if self.analytics.grid_side == 0 {
            return Err(Error::config("analytics.grid_side must be >= 1"));
        }
        self.analytics.projection_method()?;
        if !(0.0..=1.0).contains(&self.selection.long_tail_rate) {
            return Err(Error::config("selection.long_tail_rate must lie in [0, 1]"));
        }
        if self.selection.long_tail_low > self.selection.long_tail_high {
            return Err(Error::config(
                "selection.long_tail_low must not exceed long_tail_high",
            ));
        }
        if self.diagnosis.per_case < 1 {
            return Err(Error::config("diagnosis.per_case must be >= 1"));
        }
        Ok(())
    }

    /// Content hash of the effective configuration, recorded in run
    /// manifests.
    pub fn content_hash(&self) -> Result<String> {
        let canonical = serde_json::to_string(self)
            .map_err(|e| Error::config(format!("cannot hash config: {e}")))?;
        Ok(hex_digest(&canonical))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_the_published_values() {
        let c = PipelineConfig::default();
        assert_eq!(c.normalization.lambda, 0.91);
        assert_eq!(c.normalization.eps, 0.47);
        assert_eq!(c.normalization.min_samples, 2);
        assert_eq!(c.normalization.min_freq, 100);
        assert_eq!(c.selection.hard_k, 50_000);
        assert_eq!(c.selection.long_tail_low, 200);
        assert_eq!(c.selection.long_tail_high, 500);
        assert_eq!(c.selection.long_tail_rate, 0.30);
        assert_eq!(c.selection.multi_skill_min, 5);
        assert_eq!(c.selection.undertrained_z, 1.96);
        assert_eq!(c.selection.undertrained_cap, 200_000);
        assert_eq!(c.tagging.top_k, 1000);
        assert_eq!(c.analytics.grid_side, 200);
        assert_eq!(c.evolution.rounds_max, 4);
        assert_eq!(c.evolution.dimensions.len(), 4);
        assert_eq!(c.leakage.tau, 0.85);
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip_preserves_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.toml");
        std::fs::write(
            &path,
            r#"
[pipeline]
seed = 7
out_dir = "artifacts"

[normalization]
lambda = 0.8
min_freq = 2

[selection]
hard_k = 3

[leakage]
tau = 0.9

[gateway]
mock = true
mock_dim = 8

[[gateway.mock_rules]]
role = "judge"
match_type = "contains"
pattern = "always"
response = "PASS"
"#,
        )
        .unwrap();
        let config = PipelineConfig::load(&path).unwrap();
        assert_eq!(config.pipeline.seed, 7);
        assert_eq!(config.normalization.lambda, 0.8);
        assert_eq!(config.normalization.min_freq, 2);
        assert_eq!(config.selection.hard_k, 3);
        assert_eq!(config.leakage.tau, 0.9);
        assert_eq!(config.gateway.mock_dim, 8);
        assert_eq!(config.gateway.mock_rules.len(), 1);
        // Untouched parameters keep their defaults.
        assert_eq!(config.selection.undertrained_z, 1.96);
    }

    #[test]
    fn invalid_parameters_are_config_errors() {
        let mut c = PipelineConfig::default();
        c.leakage.tau = 1.5;
        assert_eq!(c.validate().unwrap_err().exit_code(), 1);

        let mut c = PipelineConfig::default();
        c.normalization.lambda = 0.0;
        assert!(c.validate().is_err());

        let mut c = PipelineConfig::default();
        c.analytics.projection = "umap".into();
        assert!(c.validate().is_err());
    }

    #[test]
    fn content_hash_tracks_changes() {
        let a = PipelineConfig::default();
        let mut b = PipelineConfig::default();
        assert_eq!(a.content_hash().unwrap(), b.content_hash().unwrap());
        b.pipeline.seed = 43;
        assert_ne!(a.content_hash().unwrap(), b.content_hash().unwrap());
    }
}
