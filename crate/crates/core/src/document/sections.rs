//! The thirteen required sections of skill and agent documents, and the
//! heading matcher that finds them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::markdown::RawSection;
use super::report::Severity;
use super::DocumentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocKind {
    Skill,
    Agent,
}

/// A canonical section: its 1-based number, stable key, display title and
/// the heading prefixes that identify it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SectionDef {
    pub number: u8,
    pub key: &'static str,
    pub title: &'static str,
    pub aliases: &'static [&'static str],
    pub severity: Severity,
}

use Severity::{Error as E, Warning as W};

#[rustfmt::skip]
pub const SKILL_SECTIONS: [SectionDef; 13] = [
    SectionDef { number: 1, key: "frontmatter", title: "YAML Frontmatter", aliases: &["yaml frontmatter", "frontmatter"], severity: E },
    SectionDef { number: 2, key: "overview", title: "Overview", aliases: &["overview", "purpose statement", "purpose"], severity: W },
    SectionDef { number: 3, key: "constants", title: "Constants", aliases: &["constants", "configurable thresholds"], severity: E },
    SectionDef { number: 4, key: "workflow", title: "Workflow / Phases", aliases: &["workflow", "phases"], severity: E },
    SectionDef { number: 5, key: "checkpoint", title: "Checkpoint / State Persistence", aliases: &["checkpoint", "state persistence"], severity: E },
    SectionDef { number: 6, key: "canonical_outputs", title: "Canonical Output Paths", aliases: &["canonical output paths", "canonical outputs", "output paths"], severity: E },
    SectionDef { number: 7, key: "decision_rules", title: "Decision Rules", aliases: &["decision rules", "branching logic"], severity: W },
    SectionDef { number: 8, key: "guardrails", title: "Guardrails", aliases: &["guardrails", "do not rules"], severity: E },
    SectionDef { number: 9, key: "evidence_discipline", title: "Evidence Discipline", aliases: &["evidence discipline"], severity: W },
    SectionDef { number: 10, key: "generator_evaluator_separation", title: "Generator-Evaluator Separation", aliases: &["generator evaluator separation"], severity: W },
    SectionDef { number: 11, key: "composability", title: "Composability", aliases: &["composability", "pipeline integration"], severity: W },
    SectionDef { number: 12, key: "key_rules", title: "Key Rules Summary", aliases: &["key rules summary", "key rules"], severity: W },
    SectionDef { number: 13, key: "audit_trail", title: "Audit Trail", aliases: &["audit trail"], severity: E },
];

#[rustfmt::skip]
pub const AGENT_SECTIONS: [SectionDef; 13] = [
    SectionDef { number: 1, key: "frontmatter", title: "YAML Frontmatter", aliases: &["yaml frontmatter", "frontmatter"], severity: E },
    SectionDef { number: 2, key: "persona", title: "Persona and Role Statement", aliases: &["persona and role statement", "persona", "role statement"], severity: W },
    SectionDef { number: 3, key: "context_isolation", title: "Context Isolation Contract", aliases: &["context isolation"], severity: E },
    SectionDef { number: 4, key: "scope", title: "Single-Responsibility Scope", aliases: &["single responsibility scope", "single responsibility", "scope"], severity: W },
    SectionDef { number: 5, key: "tool_allowlist", title: "Narrow Tool Allowlist", aliases: &["narrow tool allowlist", "tool allowlist"], severity: E },
    SectionDef { number: 6, key: "io_contract", title: "Deterministic I/O Contract", aliases: &["deterministic i/o contract", "deterministic io contract", "i/o contract", "io contract"], severity: E },
    SectionDef { number: 7, key: "role_lock", title: "Evaluator-vs-Producer Role Lock", aliases: &["evaluator vs producer role lock", "role lock"], severity: E },
    SectionDef { number: 8, key: "expertise", title: "Persona-Grounded Expertise", aliases: &["persona grounded expertise", "expertise"], severity: W },
    SectionDef { number: 9, key: "output_format", title: "Structured Output Format", aliases: &["structured output format", "output format", "return schema"], severity: W },
    SectionDef { number: 10, key: "cold_read", title: "Cold-Read Discipline", aliases: &["cold read discipline", "cold read"], severity: W },
    SectionDef { number: 11, key: "parallelism", title: "Cost and Parallelism Awareness", aliases: &["cost and parallelism awareness", "cost and parallelism", "parallelism"], severity: W },
    SectionDef { number: 12, key: "error_handling", title: "Error and Degradation Handling", aliases: &["error and degradation handling", "error handling"], severity: W },
    SectionDef { number: 13, key: "audit_contribution", title: "Audit Contribution", aliases: &["audit contribution"], severity: E },
];

pub fn sections_for(kind: DocKind) -> &'static [SectionDef; 13] {
    match kind {
        DocKind::Skill => &SKILL_SECTIONS,
        DocKind::Agent => &AGENT_SECTIONS,
    }
}

pub fn section_by_key(kind: DocKind, key: &str) -> Option<&'static SectionDef> {
    sections_for(kind).iter().find(|s| s.key == key)
}

pub fn section_by_number(kind: DocKind, number: u8) -> Option<&'static SectionDef> {
    sections_for(kind).iter().find(|s| s.number == number)
}

/// Lowercases a heading and strips numbering, emphasis, quotes and
/// parentheticals so `## 3. Constants (tuneable)` and `## **constants**`
/// normalise to the same text. Hyphens and underscores become spaces.
pub fn normalize_heading(heading: &str) -> String {
    let mut text = String::with_capacity(heading.len());
    let mut depth = 0usize;
    for ch in heading.chars() {
        match ch {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            _ if depth > 0 => {}
            '*' | '`' | '"' | '\'' | '\u{201c}' | '\u{201d}' | ':' => {}
            '-' | '_' | '\u{2013}' | '\u{2014}' => text.push(' '),
            c => text.extend(c.to_lowercase()),
        }
    }
    let mut rest = text.trim();
    // Leading "section", "§", or numbering such as "3." or "3)".
    if let Some(r) = rest.strip_prefix("section ") {
        rest = r.trim_start();
    }
    rest = rest.trim_start_matches('§').trim_start();
    let digits = rest.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let after = &rest[digits..];
        let after = after.trim_start_matches(['.', ')']);
        if after.is_empty() || after.starts_with(' ') {
            rest = after.trim_start();
        }
    }
    rest.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Finds the section a heading names: the longest alias that is a
/// word-bounded prefix of the normalised heading.
pub fn match_heading(kind: DocKind, heading: &str) -> Option<&'static SectionDef> {
    let normalized = normalize_heading(heading);
    let mut best: Option<(&'static SectionDef, usize)> = None;
    for def in sections_for(kind) {
        for alias in def.aliases {
            if let Some(rest) = normalized.strip_prefix(alias) {
                let bounded = rest.chars().next().is_none_or(|c| !c.is_alphanumeric());
                if bounded && best.is_none_or(|(_, len)| alias.len() > len) {
                    best = Some((def, alias.len()));
                }
            }
        }
    }
    best.map(|(def, _)| def)
}

/// Maps each recognised section number to its index in `sections`.
/// Unrecognised headings are ignored; a section named twice is an error.
pub(crate) fn index_sections(
    kind: DocKind,
    sections: &[RawSection],
) -> Result<BTreeMap<u8, usize>, DocumentError> {
    let mut index = BTreeMap::new();
    for (i, raw) in sections.iter().enumerate() {
        let Some(def) = match_heading(kind, &raw.heading) else {
            continue;
        };
        if def.number == 1 {
            continue;
        }
        if index.insert(def.number, i).is_some() {
            return Err(DocumentError::DuplicateSection {
                section: def.key.to_string(),
                line: raw.line,
            });
        }
    }
    Ok(index)
}
