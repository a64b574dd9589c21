//! Deterministic table-driven mock backend.
//!
//! Rules map request text to canned or derived responses; the first
//! matching rule wins. Unmatched requests fall back to a deterministic
//! hash-derived text. Responses and embeddings depend only on the
//! request content, never on call order or wall clock, so entire
//! pipeline runs are bit-reproducible offline.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatRequest, GatewayConfig, ModelRole, Transport, TransportError};
use crate::error::{Error, Result};
use crate::templates;

/// Stable 64-bit content hash (first 8 bytes of SHA-256).
pub fn stable_hash(text: &str) -> u64 {
    let digest = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

#[derive(Debug, Clone)]
pub enum MockMatcher {
    Any,
    Prefix(String),
    Contains(String),
    Regex(regex::Regex),
}

impl MockMatcher {
    fn matches(&self, text: &str) -> bool {
        match self {
            MockMatcher::Any => true,
            MockMatcher::Prefix(p) => text.starts_with(p.as_str()),
            MockMatcher::Contains(c) => text.contains(c.as_str()),
            MockMatcher::Regex(r) => r.is_match(text),
        }
    }
}

/// Deterministic response generators shaped for each pipeline stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinResponder {
    /// Comma-separated tag list: one common tag plus two hash-derived
    /// rare tags, giving fixture corpora a long-tailed tag distribution.
    HashTags,
    /// "PASS" for most inputs, "FAIL" for one in eight.
    PassFailVerdict,
    EvolvedInstruction,
    DialogueReply,
    DialogueFollowup,
    /// "NONE" for one in three, otherwise structured deficiency lines.
    Deficiencies,
    RemedialInstructions,
    DifficultyLabel,
    /// Fixed "Name: description" category list for domain induction.
    DomainCategories,
    /// Angle-bracket pick of one or two category names parsed out of
    /// the categorization standard embedded in the prompt.
    DomainChoice,
    /// Raw hash fallback.
    HashText,
}

const COMMON_TAGS: [&str; 7] = [
    "reasoning",
    "writing",
    "coding",
    "mathematics",
    "world knowledge",
    "language understanding",
    "data analysis",
];

const DEFICIENCY_CATEGORIES: [&str; 4] = [
    "Missing Knowledge",
    "Incomplete Reasoning",
    "Factual Error",
    "Formatting",
];

const DIFFICULTY_LABELS: [&str; 5] = ["very easy", "easy", "medium", "hard", "very hard"];

const MOCK_DOMAINS: [(&str, &str); 8] = [
    ("Mathematics", "calculation, algebra, geometry, and quantitative reasoning"),
    ("Coding", "writing, reading, and debugging programs"),
    ("Writing", "composition, editing, and creative text"),
    ("Knowledge", "facts about the world and specialized subjects"),
    ("Reasoning", "logic, deduction, and multi-step inference"),
    ("Language", "grammar, translation, and comprehension"),
    ("Data Analysis", "interpreting tables, statistics, and trends"),
    ("Planning", "organizing tasks, schedules, and strategies"),
];

impl BuiltinResponder {
    fn respond(&self, request: &ChatRequest) -> String {
        let h = stable_hash(&format!("{}\n{}", request.system, request.user));
        match self {
            BuiltinResponder::HashTags => {
                let common = COMMON_TAGS[(h % 7) as usize];
                let rare_a = (h / 7) % 83;
                let rare_b = (h / 581) % 89;
                format!("{common}, skill-{rare_a:02}, topic-{rare_b:02}")
            }
            BuiltinResponder::PassFailVerdict => {
                if h % 8 == 0 {
                    "FAIL".to_string()
                } else {
                    "PASS".to_string()
                }
            }
            BuiltinResponder::EvolvedInstruction => format!(
                "Work through task variant {h:016x}: restate the original request with \
                 stricter constraints, then solve it step by step."
            ),
            BuiltinResponder::DialogueReply => format!(
                "Here is a structured answer ({h:016x}) covering each requested point in order."
            ),
            BuiltinResponder::DialogueFollowup => {
                format!("Could you expand on point {:x} with a concrete example?", h % 16)
            }
            BuiltinResponder::Deficiencies => {
                if h % 3 == 0 {
                    "NONE".to_string()
                } else {
                    let cat_a = DEFICIENCY_CATEGORIES[(h % 4) as usize];
                    let mut out = format!(
                        "1. Deficiency: {cat_a} - response omits detail {:04x}",
                        h % 0xffff
                    );
                    if h % 2 == 1 {
                        let cat_b = DEFICIENCY_CATEGORIES[((h / 4) % 4) as usize];
                        out.push_str(&format!(
                            "\n2. Deficiency: {cat_b} - reasoning gap near step {}",
                            h % 7 + 1
                        ));
                    }
                    out
                }
            }
            BuiltinResponder::RemedialInstructions => format!(
                "Instruction: Practice task {:08x} targeting the first gap.\n\
                 Instruction: Practice task {:08x} targeting the remaining gaps.",
                h % 0xffff_ffff,
                (h / 3) % 0xffff_ffff
            ),
            BuiltinResponder::DifficultyLabel => DIFFICULTY_LABELS[(h % 5) as usize].to_string(),
            BuiltinResponder::DomainCategories => MOCK_DOMAINS
                .iter()
                .map(|(name, desc)| format!("{name}: {desc}"))
                .collect::<Vec<_>>()
                .join("\n"),
            BuiltinResponder::DomainChoice => {
                // Category names are listed in the prompt as "- Name: ...".
                let names: Vec<&str> = request
                    .user
                    .lines()
                    .filter_map(|l| l.strip_prefix("- "))
                    .filter_map(|l| l.split(':').next())
                    .map(str::trim)
                    .filter(|n| !n.is_empty())
                    .collect();
                if names.is_empty() {
                    return "<Other>".to_string();
                }
                let first = names[(h % names.len() as u64) as usize];
                let mut out = format!("<{first}>");
                if h % 3 == 0 && names.len() > 1 {
                    let second = names[((h / 5) % names.len() as u64) as usize];
                    if second != first {
                        out.push_str(&format!("<{second}>"));
                    }
                }
                out
            }
            BuiltinResponder::HashText => format!("mock-response-{h:016x}"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum MockResponse {
    Text(String),
    Builtin(BuiltinResponder),
}

#[derive(Debug, Clone)]
pub struct MockRule {
    /// Restrict the rule to one role; `None` matches every role.
    pub role: Option<ModelRole>,
    pub matcher: MockMatcher,
    pub response: MockResponse,
}

impl MockRule {
    fn applies(&self, request: &ChatRequest) -> bool {
        self.role.is_none_or(|r| r == request.role) && self.matcher.matches(&request.user)
    }
}

/// Rule form used in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRuleConfig {
    #[serde(default)]
    pub role: Option<ModelRole>,
    /// One of `any`, `prefix`, `contains`, `regex`.
    #[serde(default = "default_match_type")]
    pub match_type: String,
    #[serde(default)]
    pub pattern: String,
    pub response: String,
}

fn default_match_type() -> String {
    "contains".to_string()
}

impl MockRuleConfig {
    fn compile(&self) -> Result<MockRule> {
        let matcher = match self.match_type.as_str() {
            "any" => MockMatcher::Any,
            "prefix" => MockMatcher::Prefix(self.pattern.clone()),
            "contains" => MockMatcher::Contains(self.pattern.clone()),
            "regex" => MockMatcher::Regex(
                regex::Regex::new(&self.pattern)
                    .map_err(|e| Error::config(format!("bad mock rule regex: {e}")))?,
            ),
            other => {
                return Err(Error::config(format!(
                    "unknown mock rule match_type {other:?}"
                )))
            }
        };
        Ok(MockRule {
            role: self.role,
            matcher,
            response: MockResponse::Text(self.response.clone()),
        })
    }
}

#[derive(Debug)]
pub struct MockBackend {
    rules: Vec<MockRule>,
    dim: usize,
    embedding_overrides: BTreeMap<String, Vec<f64>>,
}

impl MockBackend {
    /// Backend with the built-in role rules only.
    pub fn new(dim: usize) -> Self {
        MockBackend {
            rules: Self::default_rules(),
            dim,
            embedding_overrides: BTreeMap::new(),
        }
    }

    /// Backend with config rules ahead of the built-in role rules.
    pub fn from_config(config: &GatewayConfig) -> Result<Self> {
        let mut rules = Vec::new();
        for rule in &config.mock_rules {
            rules.push(rule.compile()?);
        }
        rules.extend(Self::default_rules());
        Ok(MockBackend {
            rules,
            dim: config.mock_dim,
            embedding_overrides: BTreeMap::new(),
        })
    }

    /// Role-shaped deterministic defaults, so every pipeline stage gets
    /// a parseable response offline. Template markers disambiguate the
    /// synthesizer and oracle flavors.
    fn default_rules() -> Vec<MockRule> {
        use BuiltinResponder as B;
        use MockMatcher as M;
        vec![
            MockRule {
                role: Some(ModelRole::Tagger),
                matcher: M::Contains(templates::MARK_DOMAIN_MAP.to_string()),
                response: MockResponse::Builtin(B::DomainChoice),
            },
            MockRule {
                role: Some(ModelRole::Tagger),
                matcher: M::Any,
                response: MockResponse::Builtin(B::HashTags),
            },
            MockRule {
                role: Some(ModelRole::Oracle),
                matcher: M::Contains(templates::MARK_DOMAIN_INDUCE.to_string()),
                response: MockResponse::Builtin(B::DomainCategories),
            },
            MockRule {
                role: Some(ModelRole::Judge),
                matcher: M::Any,
                response: MockResponse::Builtin(B::PassFailVerdict),
            },
            MockRule {
                role: Some(ModelRole::Scorer),
                matcher: M::Any,
                response: MockResponse::Builtin(B::DifficultyLabel),
            },
            MockRule {
                role: Some(ModelRole::Synthesizer),
                matcher: M::Contains(templates::MARK_DIALOGUE_REPLY.to_string()),
                response: MockResponse::Builtin(B::DialogueReply),
            },
            MockRule {
                role: Some(ModelRole::Synthesizer),
                matcher: M::Contains(templates::MARK_DIALOGUE_FOLLOWUP.to_string()),
                response: MockResponse::Builtin(B::DialogueFollowup),
            },
            MockRule {
                role: Some(ModelRole::Synthesizer),
                matcher: M::Any,
                response: MockResponse::Builtin(B::EvolvedInstruction),
            },
            MockRule {
                role: Some(ModelRole::Oracle),
                matcher: M::Contains(templates::MARK_REMEDIAL.to_string()),
                response: MockResponse::Builtin(B::RemedialInstructions),
            },
            MockRule {
                role: Some(ModelRole::Oracle),
                matcher: M::Any,
                response: MockResponse::Builtin(B::Deficiencies),
            },
        ]
    }

    /// Prepend a rule (it takes precedence over existing ones).
    pub fn push_rule(&mut self, rule: MockRule) {
        self.rules.insert(0, rule);
    }

    /// Pin the embedding for one exact text, for fixtures that need
    /// constructed cosine similarities.
    pub fn override_embedding(&mut self, text: impl Into<String>, vector: Vec<f64>) {
        self.embedding_overrides.insert(text.into(), vector);
    }

    /// Hash-seeded pseudo-random unit vector; identical text always
    /// embeds to the identical vector.
    pub fn embed_text(&self, text: &str) -> Vec<f64> {
        if let Some(v) = self.embedding_overrides.get(text) {
            return v.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(text));
        loop {
            let v: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-9 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }
}

impl Transport for MockBackend {
    fn chat(&self, request: &ChatRequest) -> std::result::Result<String, TransportError> {
        for rule in &self.rules {
            if rule.applies(request) {
                return Ok(match &rule.response {
                    MockResponse::Text(t) => t.clone(),
                    MockResponse::Builtin(b) => b.respond(request),
                });
            }
        }
        Ok(BuiltinResponder::HashText.respond(request))
    }

    fn embed(&self, texts: &[String]) -> std::result::Result<Vec<Vec<f64>>, TransportError> {
        Ok(texts.iter().map(|t| self.embed_text(t)).collect())
    }
}
