//! Skill documents (`SKILL.md`).

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Component, Path};
use std::sync::OnceLock;

use regex::Regex;
use rust_decimal::Decimal;
use serde::Serialize;

use super::frontmatter::{Frontmatter, Tools};
use super::markdown::{self, RawSection};
use super::report::{Finding, Severity, ValidationReport};
use super::sections::{index_sections, DocKind, SKILL_SECTIONS};
use super::{is_kebab_name, DocumentError};
use crate::contract::{parse_decimal, ContractBlock};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PhaseSpec {
    pub ordinal: u32,
    pub name: String,
    pub entry: Option<String>,
    pub exit: Option<String>,
    pub actions: String,
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Composability {
    pub upstream: Vec<String>,
    pub downstream: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkillDocument {
    pub frontmatter: Frontmatter,
    pub overview: String,
    pub constants: BTreeMap<String, Decimal>,
    pub phases: Vec<PhaseSpec>,
    /// Contract blocks declared in the workflow section, by id.
    pub contracts: BTreeMap<String, ContractBlock>,
    pub canonical_outputs: Vec<String>,
    pub decision_rules: String,
    pub guardrails: Vec<String>,
    pub key_rules: Vec<String>,
    pub composability: Composability,
    pub sections_present: BTreeSet<u8>,
    #[serde(skip)]
    frontmatter_raw: Option<String>,
    #[serde(skip)]
    preamble: String,
    #[serde(skip)]
    sections: Vec<RawSection>,
    #[serde(skip)]
    index: BTreeMap<u8, usize>,
}

impl SkillDocument {
    pub fn name(&self) -> &str {
        &self.frontmatter.name
    }

    pub fn flags(&self) -> &[String] {
        &self.frontmatter.flags
    }

    pub fn section(&self, number: u8) -> Option<&RawSection> {
        self.index.get(&number).map(|&i| &self.sections[i])
    }

    pub fn raw_sections(&self) -> &[RawSection] {
        &self.sections
    }

    pub fn contract(&self, id: &str) -> Option<&ContractBlock> {
        self.contracts.get(id)
    }

    pub fn phase(&self, ordinal: u32) -> Option<&PhaseSpec> {
        self.phases.iter().find(|p| p.ordinal == ordinal)
    }

    /// Serializes back to document text. An unmodified parse renders to the
    /// exact input text.
    pub fn render(&self) -> String {
        let yaml = match &self.frontmatter_raw {
            Some(raw) if Frontmatter::parse(raw).as_ref() == Ok(&self.frontmatter) => raw.clone(),
            _ => self.frontmatter.to_yaml(),
        };
        let mut out = format!("---\n{yaml}---\n{}", self.preamble);
        for section in &self.sections {
            out.push_str("## ");
            out.push_str(&section.heading);
            out.push('\n');
            out.push_str(&section.body);
        }
        out
    }
}

fn constant_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:[-*]\s+)?`?([A-Z][A-Z0-9_]*)\s*=\s*([^`#]*?)`?\s*(?:#.*)?$").unwrap())
}

fn phase_heading_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^###\s+Phase\s+(\d+)\s*[:.\-]\s*(.+?)\s*$").unwrap())
}

fn audit_format_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\[(?:YYYY-MM-DD|\d{4}-\d{2}-\d{2})\] (<skill-name>|[a-z0-9]+(?:-[a-z0-9]+)*): \S").unwrap()
    })
}

/// Parses a skill document. The frontmatter fence is mandatory.
pub fn parse_skill_document(text: &str) -> Result<SkillDocument, DocumentError> {
    let split = markdown::split_frontmatter(text)?
        .ok_or_else(|| DocumentError::MalformedFrontmatter("missing `---` fence".into()))?;
    let frontmatter = Frontmatter::parse(split.yaml)?;
    let mut doc = parse_body(frontmatter, split.body, split.body_line)?;
    doc.frontmatter_raw = Some(split.yaml.to_string());
    doc.sections_present.insert(1);
    Ok(doc)
}

fn placeholder_frontmatter() -> Frontmatter {
    Frontmatter {
        name: String::new(),
        description: String::new(),
        argument_hint: None,
        tools: Tools::default(),
        flags: Vec::new(),
        extra: BTreeMap::new(),
    }
}

fn parse_body(frontmatter: Frontmatter, body: &str, body_line: usize) -> Result<SkillDocument, DocumentError> {
    let (preamble, sections) = markdown::split_sections(body, body_line);
    let index = index_sections(DocKind::Skill, &sections)?;
    let get = |n: u8| index.get(&n).map(|&i| &sections[i]);

    let constants = match get(3) {
        Some(section) => parse_constants(section)?,
        None => BTreeMap::new(),
    };
    let (phases, contracts) = match get(4) {
        Some(section) => (parse_phases(section), parse_contracts(section)?),
        None => (Vec::new(), BTreeMap::new()),
    };
    let canonical_outputs = get(6).map(|s| parse_paths(&s.body)).unwrap_or_default();
    let composability = get(11).map(|s| parse_composability(&s.body)).unwrap_or_default();

    Ok(SkillDocument {
        frontmatter,
        overview: get(2).map(|s| s.body.trim().to_string()).unwrap_or_default(),
        constants,
        phases,
        contracts,
        canonical_outputs,
        decision_rules: get(7).map(|s| s.body.trim().to_string()).unwrap_or_default(),
        guardrails: get(8).map(|s| markdown::bullets(&s.body)).unwrap_or_default(),
        key_rules: get(12).map(|s| markdown::bullets(&s.body)).unwrap_or_default(),
        composability,
        sections_present: index.keys().copied().collect(),
        frontmatter_raw: None,
        preamble,
        sections,
        index,
    })
}

fn parse_constants(section: &RawSection) -> Result<BTreeMap<String, Decimal>, DocumentError> {
    let mut constants = BTreeMap::new();
    for (offset, line) in section.body.lines().enumerate() {
        let Some(caps) = constant_line_re().captures(line) else {
            continue;
        };
        let line_no = section.line + 1 + offset;
        let name = caps[1].to_string();
        let raw = caps[2].trim();
        let value = parse_decimal(raw).ok_or_else(|| DocumentError::NonNumericConstant {
            name: name.clone(),
            value: raw.to_string(),
            line: line_no,
        })?;
        if constants.insert(name.clone(), value).is_some() {
            return Err(DocumentError::DuplicateConstant { name, line: line_no });
        }
    }
    Ok(constants)
}

fn strip_code(text: &str) -> String {
    text.trim().trim_matches('`').trim().to_string()
}

fn parse_phases(section: &RawSection) -> Vec<PhaseSpec> {
    let mut phases: Vec<PhaseSpec> = Vec::new();
    let mut in_fence = false;
    for (offset, line) in section.body.lines().enumerate() {
        if line.trim_start().starts_with("```") {
            in_fence = !in_fence;
            continue;
        }
        if in_fence {
            continue;
        }
        if let Some(caps) = phase_heading_re().captures(line) {
            phases.push(PhaseSpec {
                ordinal: caps[1].parse().unwrap_or(u32::MAX),
                name: caps[2].to_string(),
                entry: None,
                exit: None,
                actions: String::new(),
                line: section.line + 1 + offset,
            });
            continue;
        }
        let Some(phase) = phases.last_mut() else {
            continue;
        };
        let Some(item) = line.strip_prefix("- ") else {
            continue;
        };
        if let Some((key, value)) = item.split_once(':') {
            match key.trim().to_ascii_lowercase().as_str() {
                "entry" => phase.entry = Some(strip_code(value)),
                "exit" => phase.exit = Some(strip_code(value)),
                "actions" => phase.actions = value.trim().to_string(),
                _ => {}
            }
        }
    }
    phases
}

fn parse_contracts(section: &RawSection) -> Result<BTreeMap<String, ContractBlock>, DocumentError> {
    let mut contracts = BTreeMap::new();
    for block in markdown::fenced_blocks(&section.body) {
        if !matches!(block.info.as_str(), "yaml" | "yml") {
            continue;
        }
        let parsed: BTreeMap<String, ContractBlock> = serde_yaml::from_str(&block.content).map_err(|e| {
            DocumentError::MalformedContract(format!("line {}: {e}", section.line + block.line))
        })?;
        for (id, contract) in parsed {
            if contracts.contains_key(&id) {
                return Err(DocumentError::MalformedContract(format!("contract `{id}` declared twice")));
            }
            contracts.insert(id, contract);
        }
    }
    Ok(contracts)
}

/// Paths listed as bullets; the first code span of a bullet is its path,
/// otherwise its first word.
fn parse_paths(body: &str) -> Vec<String> {
    markdown::bullets(body)
        .into_iter()
        .filter_map(|item| {
            markdown::code_spans(&item)
                .into_iter()
                .next()
                .or_else(|| item.split_whitespace().next().map(str::to_string))
        })
        .collect()
}

fn parse_name_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(strip_code)
        .filter(|s| !s.is_empty() && !s.eq_ignore_ascii_case("none"))
        .collect()
}

fn parse_composability(body: &str) -> Composability {
    let mut out = Composability::default();
    for item in markdown::bullets(body) {
        let Some((key, value)) = item.split_once(':') else {
            continue;
        };
        match key.trim().trim_matches('*').to_ascii_lowercase().as_str() {
            "upstream" => out.upstream.extend(parse_name_list(value)),
            "downstream" => out.downstream.extend(parse_name_list(value)),
            _ => {}
        }
    }
    out
}

pub(crate) fn is_safe_relative_path(path: &str) -> bool {
    let p = Path::new(path);
    !path.is_empty()
        && !path.starts_with('/')
        && !path.starts_with('\\')
        && p.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}

pub(crate) fn check_frontmatter(fm: &Frontmatter, report: &mut ValidationReport) {
    if !is_kebab_name(&fm.name) {
        report.push(Finding::new(
            Severity::Error,
            "frontmatter",
            "name_format",
            format!("name `{}` is not kebab-case", fm.name),
        ));
    }
    if fm.tools.is_empty() {
        report.push(Finding::new(Severity::Error, "frontmatter", "tools_empty", "tools allowlist is empty"));
    }
    if fm.tools.is_wildcard() && fm.name != "orchestrator" {
        report.push(Finding::new(
            Severity::Error,
            "frontmatter",
            "least_privilege",
            format!("`{}` requests all tools; only the orchestrator may", fm.name),
        ));
    }
    if fm.description.trim().is_empty() {
        report.push(Finding::new(Severity::Warning, "frontmatter", "description", "description is empty"));
    }
}

/// Checks a parsed skill against the thirteen-section checklist.
pub fn validate_skill(doc: &SkillDocument) -> ValidationReport {
    let mut report = ValidationReport::default();
    if doc.sections_present.contains(&1) {
        check_frontmatter(&doc.frontmatter, &mut report);
    } else {
        report.push(missing(&SKILL_SECTIONS[0]));
    }
    for def in &SKILL_SECTIONS[1..] {
        let Some(section) = doc.section(def.number) else {
            report.push(missing(def));
            continue;
        };
        match def.key {
            "constants" => check_constants(doc, &mut report),
            "workflow" => check_workflow(doc, &mut report),
            "checkpoint" => {
                let body = section.body.to_ascii_lowercase();
                if !(body.contains("24 hours") || body.contains("stale")) {
                    report.push(
                        Finding::new(Severity::Warning, def.key, "expiry", "no checkpoint expiry rule stated")
                            .at_line(section.line),
                    );
                }
            }
            "canonical_outputs" => {
                if doc.canonical_outputs.is_empty() {
                    report.push(
                        Finding::new(def.severity, def.key, "empty", "no output paths listed").at_line(section.line),
                    );
                }
                for path in &doc.canonical_outputs {
                    if !is_safe_relative_path(path) {
                        report.push(
                            Finding::new(
                                Severity::Error,
                                def.key,
                                "relative_path",
                                format!("`{path}` must be relative with no `..`"),
                            )
                            .at_line(section.line),
                        );
                    }
                }
            }
            "guardrails" if doc.guardrails.is_empty() => {
                report.push(Finding::new(def.severity, def.key, "empty", "no guardrail rules listed").at_line(section.line));
            }
            "key_rules" if !doc.key_rules.iter().any(|r| r.to_ascii_lowercase().contains("heredoc")) => {
                report.push(
                    Finding::new(
                        Severity::Warning,
                        def.key,
                        "large_file_fallback",
                        "key rules omit the large-file heredoc fallback",
                    )
                    .at_line(section.line),
                );
            }
            "audit_trail" => {
                let name = &doc.frontmatter.name;
                let ok = audit_format_re().captures_iter(&section.body).any(|caps| {
                    let who = &caps[1];
                    who == "<skill-name>" || name.is_empty() || who == name
                });
                if !ok {
                    report.push(
                        Finding::new(
                            def.severity,
                            def.key,
                            "format",
                            "audit line must read `[YYYY-MM-DD] <skill-name>: <summary>`",
                        )
                        .at_line(section.line),
                    );
                }
            }
            _ => {}
        }
    }
    report
}

fn missing(def: &super::SectionDef) -> Finding {
    Finding::new(
        def.severity,
        def.key,
        "missing",
        format!("required section {} `{}` is missing", def.number, def.title),
    )
}

fn check_constants(doc: &SkillDocument, report: &mut ValidationReport) {
    if let Some(max_rounds) = doc.constants.get("MAX_ROUNDS") {
        if !(max_rounds.fract().is_zero() && max_rounds.is_sign_positive() && !max_rounds.is_zero()) {
            report.push(Finding::new(
                Severity::Error,
                "constants",
                "max_rounds",
                format!("MAX_ROUNDS must be a positive integer, found {max_rounds}"),
            ));
        }
    }
}

fn check_workflow(doc: &SkillDocument, report: &mut ValidationReport) {
    if doc.phases.is_empty() {
        report.push(Finding::new(Severity::Warning, "workflow", "no_phases", "no `### Phase N:` headings"));
    }
    for pair in doc.phases.windows(2) {
        if pair[1].ordinal <= pair[0].ordinal {
            report.push(
                Finding::new(
                    Severity::Error,
                    "workflow",
                    "phase_order",
                    format!("phase {} follows phase {}", pair[1].ordinal, pair[0].ordinal),
                )
                .at_line(pair[1].line),
            );
        }
    }
    for phase in &doc.phases {
        for reference in [&phase.entry, &phase.exit].into_iter().flatten() {
            if !doc.contracts.contains_key(reference) {
                report.push(
                    Finding::new(
                        Severity::Error,
                        "workflow",
                        "contract_ref",
                        format!("phase {} references undefined contract `{reference}`", phase.ordinal),
                    )
                    .at_line(phase.line),
                );
            }
        }
    }
    if doc.sections_present.contains(&3) {
        for (id, block) in &doc.contracts {
            for name in block.referenced_constants() {
                if !doc.constants.contains_key(name) {
                    report.push(Finding::new(
                        Severity::Error,
                        "workflow",
                        "unknown_constant",
                        format!("contract `{id}` uses undeclared constant `{name}`"),
                    ));
                }
            }
        }
    }
}

/// Parses and validates in one pass. A missing frontmatter fence becomes a
/// single `frontmatter` finding and the body is still checked; any other
/// parse failure is reported as one `parse` finding.
pub fn lint_skill_text(text: &str) -> ValidationReport {
    let result = match markdown::split_frontmatter(text) {
        Ok(None) => parse_body(placeholder_frontmatter(), text, 1),
        Ok(Some(_)) => parse_skill_document(text),
        Err(e) => Err(e),
    };
    match result {
        Ok(doc) => validate_skill(&doc),
        Err(e) => {
            let section = match e {
                DocumentError::MalformedFrontmatter(_) => "frontmatter",
                DocumentError::NonNumericConstant { .. } | DocumentError::DuplicateConstant { .. } => "constants",
                DocumentError::MalformedContract(_) => "workflow",
                _ => "document",
            };
            let mut report = ValidationReport::default();
            report.push(Finding::new(Severity::Error, section, "parse", e.to_string()));
            report
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = "---
name: refine-research
description: Converge on one proposal.
tools: [Read, Write]
flags: [hard_mode]
---
# refine-research

## Overview
Refines an idea.

## Constants
```
MAX_ROUNDS = 5
SCORE_THRESHOLD = 9
MAX_PRIMARY_CLAIMS = 2
MAX_NEW_TRAINABLE_COMPONENTS = 2
```

## Workflow / Phases
### Phase 1: scoring
- Entry: `p1_entry`
- Exit: `p1_exit`
- Actions: score it

```yaml
p1_entry:
  preconditions:
    - state.round <= MAX_ROUNDS
p1_exit:
  postconditions:
    - PROJ_NOTES.md has new entry
```
";

    #[test]
    fn constants_block() {
        let doc = parse_skill_document(DOC).unwrap();
        let expect: BTreeMap<String, Decimal> = [
            ("MAX_ROUNDS", 5),
            ("SCORE_THRESHOLD", 9),
            ("MAX_PRIMARY_CLAIMS", 2),
            ("MAX_NEW_TRAINABLE_COMPONENTS", 2),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), Decimal::from(v)))
        .collect();
        assert_eq!(doc.constants, expect);
        assert_eq!(doc.phases.len(), 1);
        assert_eq!(doc.phases[0].entry.as_deref(), Some("p1_entry"));
        assert_eq!(doc.contracts.len(), 2);
        assert_eq!(doc.flags(), ["hard_mode"]);
    }

    #[test]
    fn render_reproduces_text() {
        let doc = parse_skill_document(DOC).unwrap();
        assert_eq!(doc.render(), DOC);
        assert_eq!(parse_skill_document(&doc.render()).unwrap(), doc);
    }

    #[test]
    fn non_numeric_and_duplicate_constants() {
        let bad = DOC.replace("SCORE_THRESHOLD = 9", "SCORE_THRESHOLD = high");
        assert!(matches!(
            parse_skill_document(&bad),
            Err(DocumentError::NonNumericConstant { name, .. }) if name == "SCORE_THRESHOLD"
        ));
        let dup = DOC.replace("SCORE_THRESHOLD = 9", "MAX_ROUNDS = 9");
        assert!(matches!(parse_skill_document(&dup), Err(DocumentError::DuplicateConstant { .. })));
    }

    #[test]
    fn duplicate_section_is_an_error() {
        let dup = format!("{DOC}\n## Overview\nagain\n");
        assert!(matches!(parse_skill_document(&dup), Err(DocumentError::DuplicateSection { .. })));
    }

    #[test]
    fn missing_fence() {
        assert!(matches!(
            parse_skill_document("# no frontmatter\n"),
            Err(DocumentError::MalformedFrontmatter(_))
        ));
    }

    #[test]
    fn safe_paths() {
        assert!(is_safe_relative_path("output/a.md"));
        assert!(!is_safe_relative_path("../a.md"));
        assert!(!is_safe_relative_path("/etc/passwd"));
        assert!(!is_safe_relative_path("output/../../x"));
    }
}
