//! Machine-checkable phase contracts.
//!
//! A contract block lists preconditions and postconditions drawn from a
//! closed predicate language:
//!
//! ```yaml
//! phase_3_scoring:
//!   preconditions:
//!     - file_exists: output/refine-logs/round_${N}_proposal.md
//!     - state.round <= MAX_ROUNDS
//!   postconditions:
//!     - state.last_score is numeric
//!     - PROJ_NOTES.md has new entry
//!   on_failure: halt_with_diagnostic
//! ```
//!
//! Evaluation is pure over a file-system snapshot, a JSON state record,
//! placeholder bindings and the owning skill's constants.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use rust_decimal::Decimal;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::store::AuditEntry;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContractError {
    #[error("placeholder `${{{0}}}` has no binding")]
    UnboundPlaceholder(String),
    #[error("constant `{0}` is not declared by the owning skill")]
    UnknownConstant(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unrecognised condition `{0}`")]
pub struct ParseConditionError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "==",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        }
    }

    fn holds(self, ord: Ordering) -> bool {
        match self {
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ge => ord != Ordering::Less,
            CmpOp::Gt => ord == Ordering::Greater,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operand {
    Number(Decimal),
    Constant(String),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Number(n) => write!(f, "{n}"),
            Operand::Constant(c) => f.write_str(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum StatePredicate {
    Compare { op: CmpOp, operand: Operand },
    IsNumeric,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ConditionExpr {
    /// Path template relative to the store root; may contain `${NAME}`.
    FileExists(String),
    /// Dotted field path into the state record (without the `state.` prefix).
    State {
        field: String,
        predicate: StatePredicate,
    },
    /// The audit log gained an entry naming `skill` (the owning skill when
    /// `None`).
    AuditHasNewEntry { skill: Option<String> },
}

fn state_cmp_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^state\.([A-Za-z_][A-Za-z0-9_.]*)\s*(<=|>=|==|<|>)\s*(\S+)$").unwrap()
    })
}

fn state_numeric_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^state\.([A-Za-z_][A-Za-z0-9_.]*)\s+is\s+numeric$").unwrap())
}

fn audit_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(?:output/)?PROJ_NOTES\.md\s+has\s+new\s+entry(?:\s+for\s+([a-z0-9]+(?:-[a-z0-9]+)*))?$")
            .unwrap()
    })
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}").unwrap())
}

fn constant_name_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[A-Z][A-Z0-9_]*$").unwrap())
}

/// Parses a decimal literal, accepting scientific notation.
pub(crate) fn parse_decimal(text: &str) -> Option<Decimal> {
    Decimal::from_str(text)
        .ok()
        .or_else(|| Decimal::from_scientific(text).ok())
}

impl FromStr for ConditionExpr {
    type Err = ParseConditionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let text = s.trim();
        if let Some(caps) = state_numeric_re().captures(text) {
            return Ok(ConditionExpr::State {
                field: caps[1].to_string(),
                predicate: StatePredicate::IsNumeric,
            });
        }
        if let Some(caps) = state_cmp_re().captures(text) {
            let op = match &caps[2] {
                "<" => CmpOp::Lt,
                "<=" => CmpOp::Le,
                "==" => CmpOp::Eq,
                ">=" => CmpOp::Ge,
                _ => CmpOp::Gt,
            };
            let raw = &caps[3];
            let operand = if let Some(n) = parse_decimal(raw) {
                Operand::Number(n)
            } else if constant_name_re().is_match(raw) {
                Operand::Constant(raw.to_string())
            } else {
                return Err(ParseConditionError(text.to_string()));
            };
            return Ok(ConditionExpr::State {
                field: caps[1].to_string(),
                predicate: StatePredicate::Compare { op, operand },
            });
        }
        if let Some(caps) = audit_re().captures(text) {
            return Ok(ConditionExpr::AuditHasNewEntry {
                skill: caps.get(1).map(|m| m.as_str().to_string()),
            });
        }
        Err(ParseConditionError(text.to_string()))
    }
}

impl fmt::Display for ConditionExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConditionExpr::FileExists(path) => write!(f, "file_exists: {path}"),
            ConditionExpr::State { field, predicate } => match predicate {
                StatePredicate::IsNumeric => write!(f, "state.{field} is numeric"),
                StatePredicate::Compare { op, operand } => {
                    write!(f, "state.{field} {} {operand}", op.symbol())
                }
            },
            ConditionExpr::AuditHasNewEntry { skill: None } => f.write_str("PROJ_NOTES.md has new entry"),
            ConditionExpr::AuditHasNewEntry { skill: Some(s) } => {
                write!(f, "PROJ_NOTES.md has new entry for {s}")
            }
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ConditionRepr {
    Text(String),
    Keyed(BTreeMap<String, String>),
}

impl<'de> Deserialize<'de> for ConditionExpr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match ConditionRepr::deserialize(deserializer)? {
            ConditionRepr::Text(text) => text.parse().map_err(D::Error::custom),
            ConditionRepr::Keyed(map) => {
                if map.len() != 1 {
                    return Err(D::Error::custom("condition mapping must have exactly one key"));
                }
                let (key, value) = map.into_iter().next().expect("one entry");
                match key.as_str() {
                    "file_exists" => Ok(ConditionExpr::FileExists(value)),
                    "audit_has_new_entry" => Ok(ConditionExpr::AuditHasNewEntry { skill: Some(value) }),
                    other => Err(D::Error::custom(format!("unknown condition kind `{other}`"))),
                }
            }
        }
    }
}

impl Serialize for ConditionExpr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        match self {
            ConditionExpr::FileExists(path) => {
                let mut map = serializer.serialize_map(Some(1))?;
                map.serialize_entry("file_exists", path)?;
                map.end()
            }
            other => serializer.serialize_str(&other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnFailure {
    #[default]
    HaltWithDiagnostic,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractBlock {
    #[serde(default)]
    pub preconditions: Vec<ConditionExpr>,
    #[serde(default)]
    pub postconditions: Vec<ConditionExpr>,
    #[serde(default)]
    pub on_failure: OnFailure,
}

impl ContractBlock {
    /// Constant names referenced by any condition in the block.
    pub fn referenced_constants(&self) -> BTreeSet<&str> {
        self.preconditions
            .iter()
            .chain(&self.postconditions)
            .filter_map(|expr| match expr {
                ConditionExpr::State {
                    predicate:
                        StatePredicate::Compare {
                            operand: Operand::Constant(name),
                            ..
                        },
                    ..
                } => Some(name.as_str()),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContractPhase {
    Pre,
    Post,
}

/// Read-only view of which paths exist.
pub trait FileView {
    fn exists(&self, path: &str) -> bool;
}

impl FileView for BTreeSet<String> {
    fn exists(&self, path: &str) -> bool {
        self.contains(&normalize_rel(path))
    }
}

/// Existence snapshot of every file and directory under a root, captured
/// once so evaluation never observes a half-written tree.
#[derive(Debug, Clone, Default)]
pub struct FsSnapshot {
    paths: BTreeSet<String>,
}

impl FsSnapshot {
    pub fn capture(root: &Path) -> std::io::Result<Self> {
        let mut paths = BTreeSet::new();
        if root.exists() {
            walk(root, root, &mut paths)?;
        }
        Ok(Self { paths })
    }

    pub fn paths(&self) -> &BTreeSet<String> {
        &self.paths
    }
}

fn walk(root: &Path, dir: &Path, out: &mut BTreeSet<String>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        let rel = path
            .strip_prefix(root)
            .expect("walked path under root")
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/");
        let file_type = entry.file_type()?;
        out.insert(rel);
        if file_type.is_dir() {
            walk(root, &path, out)?;
        }
    }
    Ok(())
}

impl FileView for FsSnapshot {
    fn exists(&self, path: &str) -> bool {
        self.paths.contains(&normalize_rel(path))
    }
}

pub(crate) fn normalize_rel(path: &str) -> String {
    let trimmed = path.trim().trim_start_matches("./");
    trimmed.trim_end_matches('/').to_string()
}

/// Maps an output path to the skill that writes it.
pub trait ProducerLookup {
    fn producer_of(&self, path: &str) -> Option<String>;
}

/// Audit-log growth observed across a skill run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditDelta {
    pub before: usize,
    pub after: usize,
    pub newest: Option<AuditEntry>,
}

/// Everything a contract evaluation may look at.
pub struct EvalContext<'a> {
    pub files: &'a dyn FileView,
    pub state: &'a serde_json::Value,
    pub bindings: &'a BTreeMap<String, String>,
    pub constants: &'a BTreeMap<String, Decimal>,
    pub producers: Option<&'a dyn ProducerLookup>,
    pub audit: Option<&'a AuditDelta>,
    pub owning_skill: Option<&'a str>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MissingInput {
    pub path: String,
    pub producer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FailedCondition {
    pub expr: ConditionExpr,
    pub observed: String,
    pub diagnostic: String,
    pub missing_input: Option<MissingInput>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ContractOutcome {
    pub satisfied: bool,
    pub failed: Vec<FailedCondition>,
}

impl ContractOutcome {
    fn from_failures(failed: Vec<FailedCondition>) -> Self {
        Self {
            satisfied: failed.is_empty(),
            failed,
        }
    }
}

/// Substitutes `${NAME}` placeholders.
pub fn bind_template(template: &str, bindings: &BTreeMap<String, String>) -> Result<String, ContractError> {
    let mut missing = None;
    let bound = placeholder_re().replace_all(template, |caps: &regex::Captures<'_>| {
        match bindings.get(&caps[1]) {
            Some(value) => value.clone(),
            None => {
                missing.get_or_insert_with(|| caps[1].to_string());
                String::new()
            }
        }
    });
    match missing {
        Some(name) => Err(ContractError::UnboundPlaceholder(name)),
        None => Ok(bound.into_owned()),
    }
}

fn lookup_field<'v>(state: &'v serde_json::Value, field: &str) -> Option<&'v serde_json::Value> {
    field.split('.').try_fold(state, |value, key| value.get(key))
}

fn numeric_value(value: &serde_json::Value) -> Option<Decimal> {
    match value {
        serde_json::Value::Number(n) => parse_decimal(&n.to_string()),
        _ => None,
    }
}

fn describe(value: Option<&serde_json::Value>) -> String {
    match value {
        None => "missing".to_string(),
        Some(v) => format!("{v} (not numeric)"),
    }
}

/// Evaluates one side of a contract block. All conditions are evaluated;
/// resolution errors (unbound placeholder, unknown constant) abort.
pub fn evaluate(
    block: &ContractBlock,
    phase: ContractPhase,
    ctx: &EvalContext<'_>,
) -> Result<ContractOutcome, ContractError> {
    let conditions = match phase {
        ContractPhase::Pre => &block.preconditions,
        ContractPhase::Post => &block.postconditions,
    };
    let mut failed = Vec::new();
    for expr in conditions {
        if let Some(failure) = evaluate_one(expr, ctx)? {
            failed.push(failure);
        }
    }
    Ok(ContractOutcome::from_failures(failed))
}

fn evaluate_one(expr: &ConditionExpr, ctx: &EvalContext<'_>) -> Result<Option<FailedCondition>, ContractError> {
    match expr {
        ConditionExpr::FileExists(template) => {
            let path = normalize_rel(&bind_template(template, ctx.bindings)?);
            if ctx.files.exists(&path) {
                return Ok(None);
            }
            let producer = ctx.producers.and_then(|p| p.producer_of(&path));
            let diagnostic = match &producer {
                Some(skill) => format!("missing input {path}: run {skill} first"),
                None => format!("missing input {path}: no known producer"),
            };
            Ok(Some(FailedCondition {
                expr: expr.clone(),
                observed: "absent".to_string(),
                diagnostic,
                missing_input: Some(MissingInput { path, producer }),
            }))
        }
        ConditionExpr::State { field, predicate } => {
            let value = lookup_field(ctx.state, field);
            let numeric = value.and_then(numeric_value);
            match predicate {
                StatePredicate::IsNumeric => Ok(match numeric {
                    Some(_) => None,
                    None => Some(FailedCondition {
                        expr: expr.clone(),
                        observed: describe(value),
                        diagnostic: format!("state.{field} must be numeric"),
                        missing_input: None,
                    }),
                }),
                StatePredicate::Compare { op, operand } => {
                    let rhs = match operand {
                        Operand::Number(n) => *n,
                        Operand::Constant(name) => *ctx
                            .constants
                            .get(name)
                            .ok_or_else(|| ContractError::UnknownConstant(name.clone()))?,
                    };
                    let Some(lhs) = numeric else {
                        return Ok(Some(FailedCondition {
                            expr: expr.clone(),
                            observed: describe(value),
                            diagnostic: format!("state.{field} must be numeric to compare"),
                            missing_input: None,
                        }));
                    };
                    let ord = lhs.cmp(&rhs);
                    if op.holds(ord) {
                        return Ok(None);
                    }
                    let actual = match ord {
                        Ordering::Less => "<",
                        Ordering::Equal => "==",
                        Ordering::Greater => ">",
                    };
                    Ok(Some(FailedCondition {
                        expr: expr.clone(),
                        observed: format!("{lhs} {actual} {rhs}"),
                        diagnostic: format!("expected state.{field} {} {operand}", op.symbol()),
                        missing_input: None,
                    }))
                }
            }
        }
        ConditionExpr::AuditHasNewEntry { skill } => {
            let skill = skill.as_deref().or(ctx.owning_skill).unwrap_or_default();
            let Some(delta) = ctx.audit else {
                return Ok(Some(FailedCondition {
                    expr: expr.clone(),
                    observed: "no audit delta recorded".to_string(),
                    diagnostic: format!("cannot confirm an audit entry for {skill}"),
                    missing_input: None,
                }));
            };
            if postcondition_audit_check(skill, delta.before, delta.after, delta.newest.as_ref()) {
                return Ok(None);
            }
            let observed = match &delta.newest {
                Some(entry) if delta.after > delta.before => format!("newest entry names {}", entry.skill),
                _ => format!("log length {} -> {}", delta.before, delta.after),
            };
            Ok(Some(FailedCondition {
                expr: expr.clone(),
                observed,
                diagnostic: format!("PROJ_NOTES.md has no new entry for {skill}"),
                missing_input: None,
            }))
        }
    }
}

/// True when the log grew and its newest entry names `skill`.
pub fn postcondition_audit_check(skill: &str, before: usize, after: usize, newest: Option<&AuditEntry>) -> bool {
    after > before && newest.is_some_and(|entry| entry.skill == skill)
}
