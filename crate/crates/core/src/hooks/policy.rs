//! The pre-tool-use policy gate.
//!
//! Checks run in a fixed order: denied command shapes, writes under a
//! protected prefix, then the agent's tool allowlist. Every decision, allow
//! or block, is appended to the tool log.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;
use std::path::{Component, Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::document::{AgentDocument, Tools};
use crate::store::{Store, StoreError, AUDIT_FILE, CHECKPOINT_DIR, GATES_FILE, HANDOFF_FILE, LOCK_FILE, TOOL_LOG_FILE};

pub const RULE_DESTRUCTIVE: &str = "destructive_command";
pub const RULE_PROTECTED: &str = "protected_path";
pub const RULE_ALLOWLIST: &str = "allowlist";
pub const RULE_NO_ALLOWLIST: &str = "no_allowlist";
pub const RULE_DEFAULT_ALLOW: &str = "default_allow";

/// Tools that only read; targets of any other tool count as writes.
const READ_ONLY_TOOLS: [&str; 5] = ["Read", "Glob", "Grep", "WebFetch", "WebSearch"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub agent: String,
    pub tool: String,
    #[serde(default)]
    pub argv: Vec<String>,
    #[serde(default)]
    pub target_paths: Vec<String>,
}

impl ToolCall {
    pub fn new(agent: &str, tool: &str) -> Self {
        Self {
            agent: agent.to_string(),
            tool: tool.to_string(),
            argv: Vec::new(),
            target_paths: Vec::new(),
        }
    }

    pub fn argv<S: AsRef<str>>(mut self, argv: &[S]) -> Self {
        self.argv = argv.iter().map(|s| s.as_ref().to_string()).collect();
        self
    }

    pub fn target<S: AsRef<str>>(mut self, path: S) -> Self {
        self.target_paths.push(path.as_ref().to_string());
        self
    }

    pub fn writes(&self) -> bool {
        !READ_ONLY_TOOLS.contains(&self.tool.as_str())
    }
}

/// A denied command shape: a program, required positionals and required
/// flags. Flags are compared after normalization, so `-rf`, `-r -f`,
/// `-fR` and `--recursive --force` are the same shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeniedPattern {
    pub text: String,
    program: String,
    positionals: Vec<String>,
    flags: BTreeSet<String>,
}

impl DeniedPattern {
    pub fn parse(text: &str) -> Option<Self> {
        let tokens = shell_words::split(text).ok()?;
        let (program, rest) = tokens.split_first()?;
        let command = NormalizedCommand::from_tokens(program, rest);
        Some(Self {
            text: text.to_string(),
            program: command.program,
            positionals: command.positionals,
            flags: command.flags,
        })
    }

    fn matches(&self, command: &NormalizedCommand) -> bool {
        command.program == self.program
            && self.positionals.iter().all(|p| command.positionals.contains(p))
            && self.flags.is_subset(&command.flags)
    }
}

impl fmt::Display for DeniedPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

pub const DEFAULT_DENIED: [&str; 2] = ["rm -rf", "git push --force"];

pub const DEFAULT_PROTECTED: [&str; 13] = [
    "/bin", "/boot", "/dev", "/etc", "/lib", "/lib64", "/proc", "/root/.ssh", "/sbin", "/sys", "/usr", "/var/lib",
    "/System",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySet {
    pub denied_command_patterns: Vec<DeniedPattern>,
    pub protected_path_prefixes: Vec<PathBuf>,
    pub per_agent_allowlists: BTreeMap<String, Tools>,
    /// Relative targets are resolved against this directory.
    pub base_dir: PathBuf,
}

impl PolicySet {
    /// Default patterns and system prefixes, plus the store's control files.
    pub fn for_store(store_root: &Path) -> Self {
        let mut prefixes: Vec<PathBuf> = DEFAULT_PROTECTED.iter().map(PathBuf::from).collect();
        for control in [HANDOFF_FILE, AUDIT_FILE, GATES_FILE, LOCK_FILE, CHECKPOINT_DIR, "logs"] {
            prefixes.push(lexical_normalize(&store_root.join(control)));
        }
        Self {
            denied_command_patterns: DEFAULT_DENIED.iter().filter_map(|p| DeniedPattern::parse(p)).collect(),
            protected_path_prefixes: prefixes,
            per_agent_allowlists: BTreeMap::new(),
            base_dir: store_root.to_path_buf(),
        }
    }

    pub fn with_agents<'a>(mut self, agents: impl IntoIterator<Item = &'a AgentDocument>) -> Self {
        for agent in agents {
            self.per_agent_allowlists
                .insert(agent.name().to_string(), agent.tools().clone());
        }
        self
    }

    pub fn allow(mut self, agent: &str, tools: Tools) -> Self {
        self.per_agent_allowlists.insert(agent.to_string(), tools);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Allow,
    Block,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Allow => "allow",
            Verdict::Block => "block",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub verdict: Verdict,
    pub rule: String,
    /// 1-based line of this decision in the tool log.
    pub log_ref: usize,
}

/// One program invocation with flags canonicalized.
#[derive(Debug, Clone, PartialEq, Eq)]
struct NormalizedCommand {
    program: String,
    positionals: Vec<String>,
    flags: BTreeSet<String>,
}

fn canonical_short(c: char) -> String {
    match c {
        'r' | 'R' => "recursive".into(),
        'f' => "force".into(),
        other => format!("-{other}"),
    }
}

fn canonical_long(flag: &str) -> String {
    let name = flag.split('=').next().unwrap_or(flag);
    match name {
        "--recursive" => "recursive".into(),
        _ if name.starts_with("--force") => "force".into(),
        other => other.to_string(),
    }
}

impl NormalizedCommand {
    fn from_tokens(program: &str, rest: &[String]) -> Self {
        let program = program.rsplit('/').next().unwrap_or(program).to_string();
        let mut positionals = Vec::new();
        let mut flags = BTreeSet::new();
        let mut end_of_flags = false;
        for token in rest {
            if end_of_flags || token == "-" || !token.starts_with('-') {
                // `git push origin +main` is a force push.
                if program == "git" && token.starts_with('+') && token.len() > 1 {
                    flags.insert("force".to_string());
                }
                positionals.push(token.clone());
            } else if token == "--" {
                end_of_flags = true;
            } else if token.starts_with("--") {
                flags.insert(canonical_long(token));
            } else {
                flags.extend(token[1..].chars().map(canonical_short));
            }
        }
        Self {
            program,
            positionals,
            flags,
        }
    }
}

const SEPARATORS: [&str; 5] = [";", "&&", "||", "|", "&"];
const SHELLS: [&str; 5] = ["sh", "bash", "zsh", "dash", "ksh"];

/// Splits an argv into the program invocations it would run: tokens are
/// re-split with shell rules, separators start new commands, wrappers such
/// as `sudo` and `env A=b` are dropped, and `sh -c '<script>'` is expanded.
fn normalize_argv(argv: &[String], depth: usize) -> Vec<NormalizedCommand> {
    let mut tokens = Vec::new();
    for arg in argv {
        match shell_words::split(arg) {
            Ok(parts) if parts.len() > 1 || arg.contains(char::is_whitespace) => tokens.extend(parts),
            _ => tokens.push(arg.clone()),
        }
    }
    let mut expanded = Vec::new();
    for token in tokens {
        let mut rest = token.as_str();
        // Separators glued to words: `a;rm` or `x&&rm`.
        loop {
            match SEPARATORS.iter().filter_map(|s| rest.find(s).map(|i| (i, *s))).min() {
                Some((i, sep)) => {
                    if i > 0 {
                        expanded.push(rest[..i].to_string());
                    }
                    expanded.push(sep.to_string());
                    rest = &rest[i + sep.len()..];
                }
                None => {
                    if !rest.is_empty() {
                        expanded.push(rest.to_string());
                    }
                    break;
                }
            }
        }
    }

    let mut commands = Vec::new();
    for segment in expanded.split(|t| SEPARATORS.contains(&t.as_str())) {
        let mut words: &[String] = segment;
        loop {
            match words.first().map(String::as_str) {
                Some("sudo" | "doas" | "nohup" | "time" | "command" | "exec" | "xargs") => words = &words[1..],
                Some("env") => {
                    words = &words[1..];
                    while words.first().is_some_and(|w| w.contains('=') || w.starts_with('-')) {
                        words = &words[1..];
                    }
                }
                Some(w) if w.contains('=') && !w.starts_with('-') && !w.starts_with('=') => words = &words[1..],
                _ => break,
            }
        }
        let Some((program, rest)) = words.split_first() else {
            continue;
        };
        let base = program.rsplit('/').next().unwrap_or(program);
        if SHELLS.contains(&base) && depth < 4 {
            if let Some(pos) = rest.iter().position(|t| t.starts_with('-') && t.contains('c')) {
                if let Some(script) = rest.get(pos + 1) {
                    commands.extend(normalize_argv(std::slice::from_ref(script), depth + 1));
                    continue;
                }
            }
        }
        commands.push(NormalizedCommand::from_tokens(program, rest));
    }
    commands
}

fn lexical_normalize(path: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for component in path.components() {
        match component {
            Component::CurDir => {}
            Component::ParentDir => {
                out.pop();
            }
            other => out.push(other.as_os_str()),
        }
    }
    out
}

/// The decision without logging.
pub fn evaluate_call(call: &ToolCall, policy: &PolicySet) -> (Verdict, &'static str) {
    let commands = normalize_argv(&call.argv, 0);
    if policy
        .denied_command_patterns
        .iter()
        .any(|p| commands.iter().any(|c| p.matches(c)))
    {
        return (Verdict::Block, RULE_DESTRUCTIVE);
    }
    if call.writes() {
        let protected = call.target_paths.iter().any(|target| {
            let absolute = lexical_normalize(&policy.base_dir.join(target));
            policy.protected_path_prefixes.iter().any(|p| absolute.starts_with(p))
        });
        if protected {
            return (Verdict::Block, RULE_PROTECTED);
        }
    }
    match policy.per_agent_allowlists.get(&call.agent) {
        None => (Verdict::Block, RULE_NO_ALLOWLIST),
        Some(tools) if tools.is_empty() => (Verdict::Block, RULE_NO_ALLOWLIST),
        Some(tools) if !tools.allows(&call.tool) => (Verdict::Block, RULE_ALLOWLIST),
        Some(_) => (Verdict::Allow, RULE_DEFAULT_ALLOW),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolLogEntry {
    pub timestamp: DateTime<Utc>,
    pub agent: String,
    pub tool: String,
    pub verdict: Verdict,
    pub rule: String,
}

impl ToolLogEntry {
    pub fn to_line(&self) -> String {
        format!(
            "{} {} {} {} {}",
            self.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true),
            self.agent,
            self.tool,
            self.verdict,
            self.rule
        )
    }

    pub fn parse(line: &str) -> Option<Self> {
        let mut parts = line.split(' ');
        let timestamp = DateTime::parse_from_rfc3339(parts.next()?).ok()?.with_timezone(&Utc);
        let agent = parts.next()?.to_string();
        let tool = parts.next()?.to_string();
        let verdict = match parts.next()? {
            "allow" => Verdict::Allow,
            "block" => Verdict::Block,
            _ => return None,
        };
        let rule = parts.next()?.to_string();
        parts.next().is_none().then_some(Self {
            timestamp,
            agent,
            tool,
            verdict,
            rule,
        })
    }
}

fn log_field(text: &str) -> String {
    if text.is_empty() {
        "-".into()
    } else {
        text.split_whitespace().collect::<Vec<_>>().join("_")
    }
}

/// Decides and logs one call.
pub fn pre_tool_gate(call: &ToolCall, policy: &PolicySet, store: &Store) -> Result<PolicyDecision, StoreError> {
    let (verdict, rule) = evaluate_call(call, policy);
    let entry = ToolLogEntry {
        timestamp: store.clock().now(),
        agent: log_field(&call.agent),
        tool: log_field(&call.tool),
        verdict,
        rule: rule.to_string(),
    };
    store.append_line(TOOL_LOG_FILE, &entry.to_line())?;
    let log_ref = store.read_lines(TOOL_LOG_FILE)?.len();
    Ok(PolicyDecision {
        verdict,
        rule: rule.to_string(),
        log_ref,
    })
}

/// Tool-log entries for 0-based line positions in `range`, clipped to the
/// log's length.
pub fn audit_tool_log(store: &Store, range: Range<usize>) -> Result<Vec<ToolLogEntry>, StoreError> {
    let lines = store.read_lines(TOOL_LOG_FILE)?;
    let end = range.end.min(lines.len());
    let start = range.start.min(end);
    Ok(lines[start..end].iter().filter_map(|l| ToolLogEntry::parse(l)).collect())
}
