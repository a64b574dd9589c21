//! Small parsers for structured model responses.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

/// Extract the contents of each `<...>` group, in order. Group contents
/// are trimmed, empty groups removed, and duplicates dropped keeping the
/// first occurrence. A `<` inside an open group restarts the group, so
/// only bracket-free contents are captured.
pub fn parse_angle_bracket_list(s: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in s.char_indices() {
        match c {
            '<' => start = Some(i + c.len_utf8()),
            '>' => {
                if let Some(b) = start.take() {
                    let item = s[b..i].trim();
                    if !item.is_empty() && !out.iter().any(|e| e == item) {
                        out.push(item.to_string());
                    }
                }
            }
            _ => {}
        }
    }
    out
}

/// Split a tagger response into tags. Accepts comma- and
/// newline-delimited lists, trims whitespace and leading list markers
/// ("- ", "* ", "1.", "2)"), drops empties, and removes duplicates
/// case-insensitively keeping the first spelling.
pub fn parse_tag_list(s: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut seen: Vec<String> = Vec::new();
    for raw in s.split([',', '\n']) {
        let tag = strip_list_marker(raw.trim());
        if tag.is_empty() {
            continue;
        }
        let key = lowercase(tag);
        if !seen.contains(&key) {
            seen.push(key);
            out.push(tag.to_string());
        }
    }
    out
}

fn strip_list_marker(s: &str) -> &str {
    let s = s.trim();
    if let Some(rest) = s.strip_prefix("- ").or_else(|| s.strip_prefix("* ")) {
        return rest.trim();
    }
    let digits = s.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &s[digits..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return r.trim();
        }
    }
    s
}

fn lowercase(s: &str) -> String {
    s.chars().flat_map(|c| c.to_lowercase()).collect()
}

/// The five-point difficulty scale.
pub const DIFFICULTY_LABELS: [(&str, u8); 5] = [
    ("very easy", 0),
    ("easy", 1),
    ("medium", 2),
    ("hard", 3),
    ("very hard", 4),
];

/// Parse a difficulty label into its score. Matching is
/// case-insensitive and whitespace-normalized; anything else is
/// rejected (`None`).
pub fn parse_difficulty_label(s: &str) -> Option<u8> {
    let normalized: Vec<String> = s.split_whitespace().map(lowercase).collect();
    let normalized = normalized.join(" ");
    DIFFICULTY_LABELS
        .iter()
        .find(|(label, _)| *label == normalized)
        .map(|(_, score)| *score)
}
