//! Skill and agent documents: Markdown with `---`-fenced YAML frontmatter and
//! thirteen named sections each, plus the YAML dependency manifest that ties
//! skills together.
//!
//! Parsing is pure. Validation never fails; it returns findings.

pub mod agent;
pub mod frontmatter;
pub mod manifest;
pub mod markdown;
pub mod report;
pub mod sections;
pub mod skill;

use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

pub use agent::{
    lint_agent_text, parse_agent_document, validate_agent, AgentDocument, Parallelism, ParallelismClass, RoleLock,
    TokenBudget,
};
pub use frontmatter::{Frontmatter, Tools};
pub use manifest::{parse_dependency_manifest, DependencyManifest, ManifestEntry};
pub use report::{Finding, Severity, ValidationReport};
pub use sections::{DocKind, SectionDef, AGENT_SECTIONS, SKILL_SECTIONS};
pub use skill::{lint_skill_text, parse_skill_document, validate_skill, Composability, PhaseSpec, SkillDocument};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum DocumentError {
    #[error("malformed frontmatter: {0}")]
    MalformedFrontmatter(String),
    #[error("section `{section}` appears more than once (line {line})")]
    DuplicateSection { section: String, line: usize },
    #[error("constant `{name}` has non-numeric value `{value}` (line {line})")]
    NonNumericConstant { name: String, value: String, line: usize },
    #[error("constant `{name}` is declared twice (line {line})")]
    DuplicateConstant { name: String, line: usize },
    #[error("document claims more than one role: {0:?}")]
    ConflictingRoleLock(Vec<String>),
    #[error("unknown role `{0}`")]
    UnknownRole(String),
    #[error("malformed contract block: {0}")]
    MalformedContract(String),
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
}

/// `[a-z0-9]+(-[a-z0-9]+)*`
pub fn is_kebab_name(name: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[a-z0-9]+(-[a-z0-9]+)*$").unwrap())
        .is_match(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kebab_names() {
        assert!(is_kebab_name("refine-research"));
        assert!(is_kebab_name("a1"));
        assert!(!is_kebab_name(""));
        assert!(!is_kebab_name("Refine"));
        assert!(!is_kebab_name("a--b"));
        assert!(!is_kebab_name("-a"));
    }
}
