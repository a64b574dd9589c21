//! Versioned prompt templates with named placeholders.
//!
//! Template bodies ship embedded in the binary and can be overridden
//! per name from a directory of `<name>.txt` files. Every rendered
//! stage records the SHA-256 of the template it used, so a template
//! change is visible in stage reports and run manifests.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Built-in template bodies, keyed by versioned name.
const BUILTIN: [(&str, &str); 13] = [
    ("tagger.v1", include_str!("../templates/tagger.v1.txt")),
    ("domain_induce.v1", include_str!("../templates/domain_induce.v1.txt")),
    ("domain_map.v1", include_str!("../templates/domain_map.v1.txt")),
    ("evolve_diversity.v1", include_str!("../templates/evolve_diversity.v1.txt")),
    ("evolve_reasoning.v1", include_str!("../templates/evolve_reasoning.v1.txt")),
    ("evolve_concretize.v1", include_str!("../templates/evolve_concretize.v1.txt")),
    ("evolve_deepen.v1", include_str!("../templates/evolve_deepen.v1.txt")),
    ("judge.v1", include_str!("../templates/judge.v1.txt")),
    ("dialogue_reply.v1", include_str!("../templates/dialogue_reply.v1.txt")),
    ("dialogue_followup.v1", include_str!("../templates/dialogue_followup.v1.txt")),
    ("diagnose.v1", include_str!("../templates/diagnose.v1.txt")),
    ("remedial.v1", include_str!("../templates/remedial.v1.txt")),
    ("difficulty.v1", include_str!("../templates/difficulty.v1.txt")),
];

// Distinctive template phrases the mock backend keys on to pick a
// response shape for multi-purpose roles.
pub const MARK_DOMAIN_MAP: &str = "each wrapped in angle brackets";
pub const MARK_DOMAIN_INDUCE: &str = "domain-level categories";
pub const MARK_DIALOGUE_REPLY: &str = "Write the assistant's next reply";
pub const MARK_DIALOGUE_FOLLOWUP: &str = "Write the user's next message";
pub const MARK_REMEDIAL: &str = "Write new instructions that exercise";

#[derive(Debug, Clone)]
pub struct TemplateSet {
    bodies: BTreeMap<String, String>,
}

impl TemplateSet {
    /// The embedded templates.
    pub fn builtin() -> Self {
        TemplateSet {
            bodies: BUILTIN
                .iter()
                .map(|(name, body)| (name.to_string(), body.to_string()))
                .collect(),
        }
    }

    /// Embedded templates with per-name overrides from `dir`
    /// (`<name>.txt` files).
    pub fn with_overrides(dir: &Path) -> Result<Self> {
        let mut set = Self::builtin();
        let entries = std::fs::read_dir(dir)
            .map_err(|e| Error::config(format!("template dir {}: {e}", dir.display())))?;
        for entry in entries {
            let entry = entry?;
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let name = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::config(format!("bad template file name: {path:?}")))?
                .to_string();
            let body = std::fs::read_to_string(&path)?;
            set.bodies.insert(name, body);
        }
        Ok(set)
    }

    pub fn body(&self, name: &str) -> Result<&str> {
        self.bodies
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| Error::config(format!("unknown template {name:?}")))
    }

    /// SHA-256 of the template body, recorded in stage reports.
    pub fn hash(&self, name: &str) -> Result<String> {
        let body = self.body(name)?;
        Ok(hex_digest(body))
    }

    /// Render `name`, replacing each `{placeholder}` from `vars` in a
    /// single pass (placeholder-like text inside substituted values is
    /// left alone). A placeholder without a value is a config error.
    pub fn render(&self, name: &str, vars: &[(&str, &str)]) -> Result<String> {
        let body = self.body(name)?;
        let mut out = String::with_capacity(body.len());
        let mut rest = body;
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            match after.find('}') {
                Some(close) if after[..close].chars().all(|c| c.is_ascii_lowercase() || c == '_') =>
                {
                    let key = &after[..close];
                    match vars.iter().find(|(k, _)| *k == key) {
                        Some((_, value)) => out.push_str(value),
                        None => {
                            return Err(Error::config(format!(
                                "template {name:?}: no value for placeholder {{{key}}}"
                            )))
                        }
                    }
                    rest = &after[close + 1..];
                }
                _ => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        Ok(out.trim_end().to_string())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.bodies.keys().map(String::as_str)
    }

    /// Hashes of every template, for the run manifest.
    pub fn all_hashes(&self) -> BTreeMap<String, String> {
        self.bodies
            .iter()
            .map(|(name, body)| (name.clone(), hex_digest(body)))
            .collect()
    }
}

pub fn hex_digest(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
