//! The six error classes and their prescribed responses.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::BackendError;
use crate::store::StoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorClass {
    MissingInput,
    ToolUnavailable,
    QualityBelowThreshold,
    StateCorruption,
    ResourceLimit,
    ExternalTimeout,
}

impl ErrorClass {
    pub const ALL: [ErrorClass; 6] = [
        ErrorClass::MissingInput,
        ErrorClass::ToolUnavailable,
        ErrorClass::QualityBelowThreshold,
        ErrorClass::StateCorruption,
        ErrorClass::ResourceLimit,
        ErrorClass::ExternalTimeout,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::MissingInput => "MISSING_INPUT",
            ErrorClass::ToolUnavailable => "TOOL_UNAVAILABLE",
            ErrorClass::QualityBelowThreshold => "QUALITY_BELOW_THRESHOLD",
            ErrorClass::StateCorruption => "STATE_CORRUPTION",
            ErrorClass::ResourceLimit => "RESOURCE_LIMIT",
            ErrorClass::ExternalTimeout => "EXTERNAL_TIMEOUT",
        }
    }

    pub fn example(self) -> &'static str {
        match self {
            ErrorClass::MissingInput => "Upstream artifact not found",
            ErrorClass::ToolUnavailable => "Tool server unreachable",
            ErrorClass::QualityBelowThreshold => "Score < minimum after MAX_ROUNDS",
            ErrorClass::StateCorruption => "Checkpoint schema mismatch",
            ErrorClass::ResourceLimit => "Token limit / file size limit",
            ErrorClass::ExternalTimeout => "Reviewer / API timeout",
        }
    }

    pub fn prescribed_response(self) -> &'static str {
        match self {
            ErrorClass::MissingInput => "Halt with diagnostic; suggest which skill to run first",
            ErrorClass::ToolUnavailable => "Fall back to local alternative; log degradation",
            ErrorClass::QualityBelowThreshold => "Halt; write partial output with gap report",
            ErrorClass::StateCorruption => "Delete checkpoint; restart from Phase 0",
            ErrorClass::ResourceLimit => "Chunk output; use Bash heredoc fallback",
            ErrorClass::ExternalTimeout => "Retry once with backoff; halt on second failure",
        }
    }
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ErrorClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown error class `{s}`"))
    }
}

/// A runtime failure, described structurally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "failure", rename_all = "snake_case")]
pub enum Failure {
    MissingInput {
        path: String,
        producer: Option<String>,
    },
    ToolUnavailable {
        agent: String,
        reason: String,
        fallback: Option<String>,
    },
    QualityBelowThreshold {
        skill: String,
        score: Option<f64>,
        gap_report: Option<String>,
    },
    StateCorruption {
        what: String,
        reason: String,
    },
    ResourceLimit {
        what: String,
        size: u64,
        limit: u64,
    },
    ExternalTimeout {
        agent: String,
        attempts: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classified {
    pub class: ErrorClass,
    pub response: String,
    pub diagnostic: String,
}

pub fn classify_error(failure: &Failure) -> Classified {
    let (class, diagnostic) = match failure {
        Failure::MissingInput { path, producer } => (
            ErrorClass::MissingInput,
            match producer {
                Some(skill) => format!("missing input {path}: run {skill} first"),
                None => format!("missing input {path}: no known producer"),
            },
        ),
        Failure::ToolUnavailable { agent, reason, fallback } => (
            ErrorClass::ToolUnavailable,
            match fallback {
                Some(f) => format!("{agent} unavailable ({reason}); degraded to {f}"),
                None => format!("{agent} unavailable ({reason}); no local alternative"),
            },
        ),
        Failure::QualityBelowThreshold { skill, score, gap_report } => (
            ErrorClass::QualityBelowThreshold,
            format!(
                "{skill} ended below threshold (score {}); gap report {}",
                score.map_or("none".to_string(), |s| s.to_string()),
                gap_report.as_deref().unwrap_or("not written")
            ),
        ),
        Failure::StateCorruption { what, reason } => {
            (ErrorClass::StateCorruption, format!("{what} is corrupt: {reason}"))
        }
        Failure::ResourceLimit { what, size, limit } => {
            (ErrorClass::ResourceLimit, format!("{what} is {size}, limit {limit}"))
        }
        Failure::ExternalTimeout { agent, attempts } => {
            (ErrorClass::ExternalTimeout, format!("{agent} timed out {attempts} time(s)"))
        }
    };
    Classified {
        class,
        response: class.prescribed_response().to_string(),
        diagnostic,
    }
}

impl Failure {
    pub fn from_backend(e: &BackendError, attempts: u32) -> Self {
        match e {
            BackendError::Timeout { agent } => Failure::ExternalTimeout {
                agent: agent.clone(),
                attempts,
            },
            BackendError::Unavailable { agent, reason } => Failure::ToolUnavailable {
                agent: agent.clone(),
                reason: reason.clone(),
                fallback: None,
            },
            BackendError::BudgetExceeded { estimated, max } => Failure::ResourceLimit {
                what: "payload tokens".into(),
                size: *estimated,
                limit: *max,
            },
            BackendError::WriteOutsideStore { .. } | BackendError::UndeclaredGrant { .. } => Failure::ToolUnavailable {
                agent: "file access".into(),
                reason: e.to_string(),
                fallback: None,
            },
        }
    }

    pub fn from_store(e: &StoreError) -> Self {
        match e {
            StoreError::Storage { path, source } => Failure::ResourceLimit {
                what: format!("write to {} ({source})", path.display()),
                size: 0,
                limit: 0,
            },
            StoreError::Locked(_) | StoreError::OutsideRoot(_) => Failure::ToolUnavailable {
                agent: "store".into(),
                reason: e.to_string(),
                fallback: None,
            },
            StoreError::CorruptCheckpoint { skill, reason } => Failure::StateCorruption {
                what: format!("checkpoint for {skill}"),
                reason: reason.clone(),
            },
            StoreError::SchemaViolation(_) | StoreError::MultilineSummary | StoreError::InvalidAuditEntry(_) => {
                Failure::StateCorruption {
                    what: "store record".into(),
                    reason: e.to_string(),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_class_reachable_once() {
        let failures = [
            Failure::MissingInput { path: "output/IDEA_REPORT.md".into(), producer: Some("idea-discovery-pipeline".into()) },
            Failure::ToolUnavailable { agent: "a".into(), reason: "down".into(), fallback: Some("b".into()) },
            Failure::QualityBelowThreshold { skill: "s".into(), score: Some(4.0), gap_report: None },
            Failure::StateCorruption { what: "w".into(), reason: "r".into() },
            Failure::ResourceLimit { what: "w".into(), size: 2, limit: 1 },
            Failure::ExternalTimeout { agent: "a".into(), attempts: 2 },
        ];
        let classes: Vec<ErrorClass> = failures.iter().map(|f| classify_error(f).class).collect();
        assert_eq!(classes, ErrorClass::ALL);
        let c = classify_error(&failures[0]);
        assert_eq!(c.diagnostic, "missing input output/IDEA_REPORT.md: run idea-discovery-pipeline first");
        assert_eq!(c.response, "Halt with diagnostic; suggest which skill to run first");
    }

    #[test]
    fn names_round_trip() {
        for c in ErrorClass::ALL {
            assert_eq!(c.as_str().parse::<ErrorClass>().unwrap(), c);
            assert_eq!(serde_json::to_value(c).unwrap(), c.as_str());
        }
    }
}
