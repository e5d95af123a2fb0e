//! The agent invocation boundary.
//!
//! Generators and evaluators are reached through [`AgentBackend`]: a
//! deterministic [`MockBackend`] driven by a script file, or a
//! [`RemoteBackend`] speaking a minimal HTTP completion protocol. Callers run
//! [`preflight_budget`] first and classify failures through the pipeline's
//! error taxonomy.

mod mock;
mod remote;
mod schema;
mod signature;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::document::TokenBudget;

pub use mock::{MockBackend, MockScript, MockScriptError, ScriptedResponse};
pub use remote::{RemoteBackend, RemoteConfig};
pub use schema::{validate_return, FieldKind, FieldSpec, ReturnCheck, ReturnSchema};
pub use signature::{format_score_signature, parse_score_signature, ScoreSignature, SignatureParse};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentInvocation {
    pub agent: String,
    pub payload: String,
    pub thread_id: String,
    pub budget: TokenBudget,
    #[serde(default)]
    pub files_granted: BTreeSet<String>,
}

impl AgentInvocation {
    pub fn new(agent: &str, payload: impl Into<String>, thread_id: &str) -> Self {
        Self {
            agent: agent.to_string(),
            payload: payload.into(),
            thread_id: thread_id.to_string(),
            budget: TokenBudget::default(),
            files_granted: BTreeSet::new(),
        }
    }

    pub fn with_budget(mut self, budget: TokenBudget) -> Self {
        self.budget = budget;
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input: u64,
    pub output: u64,
}

impl TokenUsage {
    pub fn total(&self) -> u64 {
        self.input + self.output
    }
}

impl std::ops::AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: Self) {
        self.input += rhs.input;
        self.output += rhs.output;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentResult {
    /// Parsed JSON object when the raw text is one, otherwise empty.
    pub structured: serde_json::Map<String, serde_json::Value>,
    pub raw: String,
    pub tokens: TokenUsage,
    /// Store-relative paths written on the agent's behalf.
    pub files_written: Vec<String>,
}

impl AgentResult {
    pub fn from_raw(raw: impl Into<String>, tokens: TokenUsage) -> Self {
        let raw = raw.into();
        let structured = match serde_json::from_str::<serde_json::Value>(raw.trim()) {
            Ok(serde_json::Value::Object(map)) => map,
            _ => serde_json::Map::new(),
        };
        Self {
            structured,
            raw,
            tokens,
            files_written: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend timed out invoking `{agent}`")]
    Timeout { agent: String },
    #[error("backend unavailable for `{agent}`: {reason}")]
    Unavailable { agent: String, reason: String },
    #[error("payload estimated at {estimated} tokens exceeds input_max {max}")]
    BudgetExceeded { estimated: u64, max: u64 },
    #[error("agent attempted to write `{path}` outside the store root")]
    WriteOutsideStore { path: String },
    #[error("granted file `{path}` is not among the agent's declared context reads")]
    UndeclaredGrant { path: String },
}

/// Anything that can run an agent invocation.
pub trait AgentBackend: Send + Sync {
    fn invoke(&self, invocation: &AgentInvocation) -> Result<AgentResult, BackendError>;

    /// Cumulative token usage across every successful invocation.
    fn usage(&self) -> TokenUsage;

    /// Number of successful invocations so far.
    fn calls(&self) -> u64;
}

/// ⌈words × 1.3⌉, with words split on whitespace.
pub fn estimate_tokens(text: &str) -> u64 {
    let words = text.split_whitespace().count() as u64;
    (words * 13).div_ceil(10)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preflight {
    pub allow: bool,
    pub estimated_tokens: u64,
}

pub fn preflight_budget(invocation: &AgentInvocation) -> Preflight {
    let estimated_tokens = estimate_tokens(&invocation.payload);
    Preflight {
        allow: estimated_tokens <= invocation.budget.input_max,
        estimated_tokens,
    }
}

/// Runs the budget preflight, then the backend.
pub fn invoke_checked(backend: &dyn AgentBackend, invocation: &AgentInvocation) -> Result<AgentResult, BackendError> {
    let pre = preflight_budget(invocation);
    if !pre.allow {
        return Err(BackendError::BudgetExceeded {
            estimated: pre.estimated_tokens,
            max: invocation.budget.input_max,
        });
    }
    backend.invoke(invocation)
}

/// Result of [`invoke_with_retry`]: the result plus whether a timeout was
/// retried on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct Retried {
    pub result: AgentResult,
    pub retried: bool,
}

/// Retries once after `backoff` on a timeout. A second timeout is returned.
pub fn invoke_with_retry(
    backend: &dyn AgentBackend,
    invocation: &AgentInvocation,
    backoff: std::time::Duration,
) -> Result<Retried, BackendError> {
    match invoke_checked(backend, invocation) {
        Err(BackendError::Timeout { .. }) => {
            std::thread::sleep(backoff);
            invoke_checked(backend, invocation).map(|result| Retried { result, retried: true })
        }
        other => other.map(|result| Retried { result, retried: false }),
    }
}

/// Rejects grants outside an agent's declared context reads.
pub fn check_grants(invocation: &AgentInvocation, context_reads: &[String]) -> Result<(), BackendError> {
    match invocation.files_granted.iter().find(|p| !context_reads.contains(p)) {
        Some(path) => Err(BackendError::UndeclaredGrant { path: path.clone() }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimates() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("one"), 2);
        assert_eq!(estimate_tokens("a b c d e f g h i j"), 13);
        assert_eq!(estimate_tokens(&"w ".repeat(100)), 130);
    }

    #[test]
    fn preflight_boundary() {
        let inv = AgentInvocation::new("x", "w ".repeat(100), "t");
        assert!(preflight_budget(&inv).allow);
        // 61539 words → ⌈80000.7⌉ = 80001 tokens
        let inv = AgentInvocation::new("x", "w ".repeat(61539), "t");
        assert_eq!(preflight_budget(&inv), Preflight { allow: false, estimated_tokens: 80001 });
        let inv = AgentInvocation::new("x", "w ".repeat(61538), "t");
        assert_eq!(preflight_budget(&inv), Preflight { allow: true, estimated_tokens: 80000 });
        let inv = AgentInvocation::new("x", "", "t");
        assert_eq!(preflight_budget(&inv), Preflight { allow: true, estimated_tokens: 0 });
    }

    #[test]
    fn grants_must_be_declared() {
        let mut inv = AgentInvocation::new("x", "", "t");
        inv.files_granted.insert("output/A.md".into());
        assert!(check_grants(&inv, &["output/A.md".into()]).is_ok());
        assert!(check_grants(&inv, &[]).is_err());
    }
}
