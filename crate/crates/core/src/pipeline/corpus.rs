//! A corpus directory: skill and agent documents, the dependency manifest,
//! the pipeline definition and the harness configuration.
//!
//! ```text
//! <dir>/skills/<name>/SKILL.md
//! <dir>/skills/DEPENDENCY_GRAPH.yaml
//! <dir>/agents/<name>.md
//! <dir>/pipeline.yaml
//! <dir>/harness.toml
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{HarnessConfig, CONFIG_FILE};
use super::definition::{FeatureFlags, PipelineDefinition};
use super::PipelineError;
use crate::document::{
    lint_agent_text, lint_skill_text, parse_agent_document, parse_dependency_manifest, parse_skill_document,
    AgentDocument, Finding, RoleLock, Severity, SkillDocument, ValidationReport,
};
use crate::graph::{build_graph, validate_dispatch, DispatchPlan, SkillGraph};

pub const SKILLS_DIR: &str = "skills";
pub const AGENTS_DIR: &str = "agents";
pub const SKILL_FILE: &str = "SKILL.md";
pub const GRAPH_FILE: &str = "skills/DEPENDENCY_GRAPH.yaml";
pub const DEFINITION_FILE: &str = "pipeline.yaml";

#[derive(Debug, Clone)]
pub struct Corpus {
    pub dir: PathBuf,
    pub skills: BTreeMap<String, SkillDocument>,
    pub agents: BTreeMap<String, AgentDocument>,
    pub graph: SkillGraph,
    pub definition: PipelineDefinition,
    pub config: HarnessConfig,
}

fn read(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|e| PipelineError::Corpus(format!("{}: {e}", path.display())))
}

fn skill_files(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let root = dir.join(SKILLS_DIR);
    let mut out = Vec::new();
    let entries = std::fs::read_dir(&root).map_err(|e| PipelineError::Corpus(format!("{}: {e}", root.display())))?;
    for entry in entries.flatten() {
        let path = entry.path().join(SKILL_FILE);
        if path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn agent_files(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let root = dir.join(AGENTS_DIR);
    let entries = std::fs::read_dir(&root).map_err(|e| PipelineError::Corpus(format!("{}: {e}", root.display())))?;
    let mut out: Vec<PathBuf> = entries
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "md"))
        .collect();
    out.sort();
    Ok(out)
}

impl Corpus {
    /// Loads every piece without linting. Parse failures are errors.
    pub fn load(dir: impl Into<PathBuf>) -> Result<Self, PipelineError> {
        let dir = dir.into();
        let mut skills = BTreeMap::new();
        for path in skill_files(&dir)? {
            let doc = parse_skill_document(&read(&path)?)
                .map_err(|e| PipelineError::Corpus(format!("{}: {e}", path.display())))?;
            skills.insert(doc.name().to_string(), doc);
        }
        let mut agents = BTreeMap::new();
        for path in agent_files(&dir)? {
            let doc = parse_agent_document(&read(&path)?)
                .map_err(|e| PipelineError::Corpus(format!("{}: {e}", path.display())))?;
            agents.insert(doc.name().to_string(), doc);
        }
        let manifest = parse_dependency_manifest(&read(&dir.join(GRAPH_FILE))?)
            .map_err(|e| PipelineError::Corpus(format!("{GRAPH_FILE}: {e}")))?;
        let graph = build_graph(&manifest).map_err(|e| PipelineError::Corpus(format!("{GRAPH_FILE}: {e}")))?;
        let definition = PipelineDefinition::from_yaml(&read(&dir.join(DEFINITION_FILE))?)?;
        let config_path = dir.join(CONFIG_FILE);
        let config = if config_path.exists() {
            HarnessConfig::from_toml(&read(&config_path)?)?
        } else {
            HarnessConfig::default()
        };
        Ok(Self {
            dir,
            skills,
            agents,
            graph,
            definition,
            config,
        })
    }

    /// Definition flags, overridden by the configuration file.
    pub fn feature_flags(&self) -> FeatureFlags {
        self.config.feature_flags.unwrap_or(self.definition.feature_flags)
    }

    pub fn skill(&self, name: &str) -> Result<&SkillDocument, PipelineError> {
        self.skills
            .get(name)
            .ok_or_else(|| PipelineError::Corpus(format!("no skill document for `{name}`")))
    }

    pub fn agent(&self, name: &str) -> Option<&AgentDocument> {
        self.agents.get(name)
    }

    /// Checks tying the documents to the definition: every step's skill and
    /// agent exists, review chains name evaluators, generators are
    /// producers, and dispatch groups respect the graph.
    pub fn cross_check(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let mut err = |rule: &str, msg: String| report.push(Finding::new(Severity::Error, "pipeline", rule, msg));
        for step in self.definition.steps() {
            let spec = step.spec;
            if !self.skills.contains_key(&spec.skill) {
                err("unknown_skill", format!("step `{}` has no skill document", spec.skill));
            }
            if !self.graph.contains(&spec.skill) {
                err("not_in_graph", format!("step `{}` is missing from the dependency graph", spec.skill));
            }
            for agent in std::iter::once(&spec.agent).chain(&spec.fallback_agent) {
                if !self.agents.contains_key(agent) {
                    err("unknown_agent", format!("step `{}` names unknown agent `{agent}`", spec.skill));
                }
            }
            if let Some(review) = &spec.review {
                match self.agents.get(&review.generator) {
                    Some(a) if a.role_lock == RoleLock::Producer => {}
                    Some(_) => err("role_lock", format!("generator `{}` is not a producer", review.generator)),
                    None => err("unknown_agent", format!("unknown generator `{}`", review.generator)),
                }
                // A generator in its own chain is refused at run time unless
                // separation is disabled.
                for reviewer in review.chain.reviewers().iter().filter(|r| r.id != review.generator) {
                    match self.agents.get(&reviewer.id) {
                        Some(a) if a.role_lock == RoleLock::Evaluator => {}
                        Some(_) => err("role_lock", format!("reviewer `{}` is not an evaluator", reviewer.id)),
                        None => err("unknown_agent", format!("unknown reviewer `{}`", reviewer.id)),
                    }
                }
            }
        }
        for binding in &self.definition.stages {
            if binding.dispatch.is_empty() {
                continue;
            }
            let constraints = binding
                .steps
                .iter()
                .filter_map(|s| self.agents.get(&s.agent).map(|a| (s.skill.clone(), a.parallelism.clone())))
                .collect();
            let groups = binding.dispatch.iter().map(|g| g.iter().map(String::as_str).collect()).collect();
            report.extend(validate_dispatch(&self.graph, &DispatchPlan::new(groups, constraints)));
        }
        report
    }
}

/// Findings for one file.
#[derive(Debug, Clone, Serialize)]
pub struct FileLint {
    pub path: String,
    pub report: ValidationReport,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CorpusLint {
    pub files: Vec<FileLint>,
}

impl CorpusLint {
    pub fn error_count(&self) -> usize {
        self.files.iter().map(|f| f.report.error_count()).sum()
    }

    pub fn document_count(&self) -> usize {
        self.files
            .iter()
            .filter(|f| f.path.ends_with(".md"))
            .count()
    }

    /// `path:severity:section:rule:message`, one line per finding.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for file in &self.files {
            for finding in &file.report.findings {
                out.push_str(&format!("{}:{finding}\n", file.path));
            }
        }
        out
    }
}

/// Lints one skill or agent file (by name: `SKILL.md` is a skill), or a
/// whole corpus directory including the graph, definition and
/// cross-document checks.
pub fn lint_path(path: &Path) -> Result<CorpusLint, PipelineError> {
    if path.is_file() {
        let text = read(path)?;
        let report = if path.file_name().is_some_and(|n| n == SKILL_FILE) {
            lint_skill_text(&text)
        } else {
            lint_agent_text(&text)
        };
        return Ok(CorpusLint {
            files: vec![FileLint {
                path: path.display().to_string(),
                report,
            }],
        });
    }
    lint_corpus(path)
}

pub fn lint_corpus(dir: &Path) -> Result<CorpusLint, PipelineError> {
    let rel = |p: &Path| p.strip_prefix(dir).unwrap_or(p).display().to_string();
    let mut lint = CorpusLint::default();
    for path in skill_files(dir)? {
        lint.files.push(FileLint {
            path: rel(&path),
            report: lint_skill_text(&read(&path)?),
        });
    }
    for path in agent_files(dir)? {
        lint.files.push(FileLint {
            path: rel(&path),
            report: lint_agent_text(&read(&path)?),
        });
    }
    let mut whole = ValidationReport::default();
    match Corpus::load(dir) {
        Ok(corpus) => whole.extend(corpus.cross_check()),
        Err(e) => whole.push(Finding::new(Severity::Error, "pipeline", "load", e.to_string())),
    }
    lint.files.push(FileLint {
        path: DEFINITION_FILE.into(),
        report: whole,
    });
    Ok(lint)
}
