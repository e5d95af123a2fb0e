//! Agent documents (`agents/<name>.md`).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::frontmatter::{Frontmatter, Tools};
use super::markdown::{self, RawSection};
use super::report::{Finding, Severity, ValidationReport};
use super::sections::{index_sections, DocKind, AGENT_SECTIONS};
use super::skill::check_frontmatter;
use super::DocumentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleLock {
    Producer,
    Evaluator,
    Orchestrator,
}

impl RoleLock {
    pub fn as_str(self) -> &'static str {
        match self {
            RoleLock::Producer => "producer",
            RoleLock::Evaluator => "evaluator",
            RoleLock::Orchestrator => "orchestrator",
        }
    }

    fn from_word(word: &str) -> Option<Self> {
        match word.trim().trim_matches(['*', '`', '.']).to_ascii_lowercase().as_str() {
            "producer" | "produces" | "produce" => Some(RoleLock::Producer),
            "evaluator" | "evaluates" | "evaluate" => Some(RoleLock::Evaluator),
            "orchestrator" | "orchestrates" => Some(RoleLock::Orchestrator),
            _ => None,
        }
    }
}

impl fmt::Display for RoleLock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParallelismClass {
    Independent,
    DependsOn(Vec<String>),
    GlobalSingleton,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Parallelism {
    pub class: ParallelismClass,
    pub max_concurrent: u32,
}

impl Default for Parallelism {
    fn default() -> Self {
        Self {
            class: ParallelismClass::Independent,
            max_concurrent: 1,
        }
    }
}

impl Parallelism {
    pub fn depends_on(&self) -> &[String] {
        match &self.class {
            ParallelismClass::DependsOn(names) => names,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenBudget {
    pub input_max: u64,
    pub output_max: u64,
}

impl Default for TokenBudget {
    fn default() -> Self {
        Self {
            input_max: 80_000,
            output_max: 4_000,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParallelismRepr {
    class: String,
    #[serde(default)]
    depends_on: Vec<String>,
    #[serde(default)]
    max_concurrent: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentDocument {
    pub frontmatter: Frontmatter,
    pub persona: String,
    pub capability_bullets: Vec<String>,
    pub context_reads: Vec<String>,
    pub role_lock: RoleLock,
    pub parallelism: Parallelism,
    pub token_budget: TokenBudget,
    pub return_schema_ref: Option<String>,
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

impl AgentDocument {
    pub fn name(&self) -> &str {
        &self.frontmatter.name
    }

    pub fn tools(&self) -> &Tools {
        &self.frontmatter.tools
    }

    pub fn section(&self, number: u8) -> Option<&RawSection> {
        self.index.get(&number).map(|&i| &self.sections[i])
    }

    pub fn declares_cold_read(&self) -> bool {
        self.sections_present.contains(&10)
    }

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

fn role_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?im)^\s*(?:[-*]\s+)?\**role\**\s*:\**\s*(.+?)\s*$").unwrap())
}

fn parse_role(name: &str, section: Option<&RawSection>) -> Result<RoleLock, DocumentError> {
    let Some(section) = section else {
        return Ok(if name == "orchestrator" {
            RoleLock::Orchestrator
        } else {
            RoleLock::Producer
        });
    };
    let mut roles = BTreeSet::new();
    for caps in role_line_re().captures_iter(&markdown::prose(&section.body)) {
        for word in caps[1].split(|c: char| c == ',' || c == '/' || c.is_whitespace()) {
            if word.is_empty() || word.eq_ignore_ascii_case("and") {
                continue;
            }
            match RoleLock::from_word(word) {
                Some(role) => {
                    roles.insert(role);
                }
                None => return Err(DocumentError::UnknownRole(word.to_string())),
            }
        }
    }
    match roles.len() {
        0 => parse_role(name, None),
        1 => Ok(*roles.iter().next().expect("one role")),
        _ => Err(DocumentError::ConflictingRoleLock(
            roles.iter().map(|r| r.as_str().to_string()).collect(),
        )),
    }
}

fn parse_parallelism(extra: &BTreeMap<String, serde_yaml::Value>) -> Result<Parallelism, DocumentError> {
    let Some(value) = extra.get("parallelism") else {
        return Ok(Parallelism::default());
    };
    let repr: ParallelismRepr = serde_yaml::from_value(value.clone())
        .map_err(|e| DocumentError::MalformedFrontmatter(format!("parallelism: {e}")))?;
    let class = match repr.class.as_str() {
        "independent" => ParallelismClass::Independent,
        "depends_on" => ParallelismClass::DependsOn(repr.depends_on),
        "global_singleton" => ParallelismClass::GlobalSingleton,
        other => {
            return Err(DocumentError::MalformedFrontmatter(format!(
                "unknown parallelism class `{other}`"
            )))
        }
    };
    Ok(Parallelism {
        class,
        max_concurrent: repr.max_concurrent.unwrap_or(1),
    })
}

fn parse_budget(extra: &BTreeMap<String, serde_yaml::Value>) -> Result<TokenBudget, DocumentError> {
    match extra.get("token_budget") {
        None => Ok(TokenBudget::default()),
        Some(value) => serde_yaml::from_value(value.clone())
            .map_err(|e| DocumentError::MalformedFrontmatter(format!("token_budget: {e}"))),
    }
}

/// Parses an agent document. Role lock comes from `Role:` lines in the
/// role-lock section; parallelism, token budget and return schema come from
/// frontmatter keys and fall back to defaults.
pub fn parse_agent_document(text: &str) -> Result<AgentDocument, DocumentError> {
    let split = markdown::split_frontmatter(text)?
        .ok_or_else(|| DocumentError::MalformedFrontmatter("missing `---` fence".into()))?;
    let frontmatter = Frontmatter::parse(split.yaml)?;
    let (preamble, sections) = markdown::split_sections(split.body, split.body_line);
    let index = index_sections(DocKind::Agent, &sections)?;
    let get = |n: u8| index.get(&n).map(|&i| &sections[i]);

    let role_lock = parse_role(&frontmatter.name, get(7))?;
    let parallelism = parse_parallelism(&frontmatter.extra)?;
    let token_budget = parse_budget(&frontmatter.extra)?;
    let return_schema_ref = match frontmatter.extra.get("return_schema") {
        None => None,
        Some(serde_yaml::Value::String(path)) => Some(path.clone()),
        Some(_) => {
            return Err(DocumentError::MalformedFrontmatter("return_schema must be a path".into()));
        }
    };
    let context_reads = get(3)
        .map(|s| {
            markdown::bullets(&s.body)
                .iter()
                .flat_map(|b| markdown::code_spans(b))
                .collect()
        })
        .unwrap_or_default();
    let mut sections_present: BTreeSet<u8> = index.keys().copied().collect();
    sections_present.insert(1);

    Ok(AgentDocument {
        capability_bullets: markdown::bullets(&frontmatter.description),
        persona: get(2).map(|s| s.body.trim().to_string()).unwrap_or_default(),
        context_reads,
        role_lock,
        parallelism,
        token_budget,
        return_schema_ref,
        sections_present,
        frontmatter_raw: Some(split.yaml.to_string()),
        frontmatter,
        preamble,
        sections,
        index,
    })
}

/// Checks an agent against its thirteen-section checklist, least privilege,
/// budgets and the evaluator cold-read requirement.
pub fn validate_agent(doc: &AgentDocument) -> ValidationReport {
    let mut report = ValidationReport::default();
    check_frontmatter(&doc.frontmatter, &mut report);
    for def in &AGENT_SECTIONS[1..] {
        if def.key == "cold_read" || doc.sections_present.contains(&def.number) {
            continue;
        }
        report.push(Finding::new(
            def.severity,
            def.key,
            "missing",
            format!("required section {} `{}` is missing", def.number, def.title),
        ));
    }
    if doc.role_lock == RoleLock::Evaluator && !doc.declares_cold_read() {
        report.push(Finding::new(
            Severity::Error,
            "cold_read",
            "evaluator_cold_read",
            "evaluator agents must declare a cold-read discipline section",
        ));
    }
    let budget = doc.token_budget;
    if !(budget.input_max > budget.output_max && budget.output_max > 0) {
        report.push(Finding::new(
            Severity::Error,
            "frontmatter",
            "token_budget",
            format!(
                "token budget needs input_max > output_max > 0, found {} / {}",
                budget.input_max, budget.output_max
            ),
        ));
    }
    if doc.parallelism.max_concurrent == 0 {
        report.push(Finding::new(
            Severity::Error,
            "frontmatter",
            "max_concurrent",
            "max_concurrent must be positive",
        ));
    }
    if matches!(&doc.parallelism.class, ParallelismClass::DependsOn(d) if d.is_empty()) {
        report.push(Finding::new(
            Severity::Error,
            "frontmatter",
            "depends_on",
            "class depends_on names no agents",
        ));
    }
    report
}

pub fn lint_agent_text(text: &str) -> ValidationReport {
    match parse_agent_document(text) {
        Ok(doc) => validate_agent(&doc),
        Err(e) => {
            let section = match e {
                DocumentError::ConflictingRoleLock(_) | DocumentError::UnknownRole(_) => "role_lock",
                DocumentError::MalformedFrontmatter(_) => "frontmatter",
                _ => "document",
            };
            let mut report = ValidationReport::default();
            report.push(Finding::new(Severity::Error, section, "parse", e.to_string()));
            report
        }
    }
}
