//! `handoff.json`: the single durable record of pipeline position.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{Store, StoreError, HANDOFF_FILE};
use crate::review::ScoreVector;
use crate::stage::StageId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    pub stage: StageId,
    pub last_completed_step: String,
    pub next_step: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewSection {
    pub per_criterion_scores: Option<ScoreVector>,
    pub decision: String,
    pub action_items: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub best_model: String,
    pub results_ref: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaperSection {
    pub sections_accepted: Vec<String>,
    pub sections_pending: Vec<String>,
    pub last_score: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenBudgetSection {
    pub used: u64,
    pub remaining: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverySection {
    pub files_to_read: Vec<String>,
    pub resume_skill: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSection {
    pub id: String,
    pub ended_at: DateTime<Utc>,
}

/// The eight handoff sections. Unknown top-level keys are kept in `extra`
/// and written back unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandoffRecord {
    pub pipeline: PipelineSection,
    pub review: ReviewSection,
    pub experiment: ExperimentSection,
    pub paper: PaperSection,
    pub token_budget: TokenBudgetSection,
    pub recovery: RecoverySection,
    pub session: SessionSection,
    pub notifications: Vec<String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

/// Result of reading `handoff.json`. Corruption is a value so the caller can
/// apply the state-corruption response.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum HandoffLoad {
    Absent,
    Loaded(HandoffRecord),
    Corrupt { reason: String },
}

impl HandoffRecord {
    pub const SECTIONS: [&'static str; 8] = [
        "pipeline",
        "review",
        "experiment",
        "paper",
        "token_budget",
        "recovery",
        "session",
        "notifications",
    ];

    /// Builds a record from arbitrary JSON, reporting any schema mismatch.
    pub fn from_value(value: serde_json::Value) -> Result<Self, StoreError> {
        let record: Self = serde_json::from_value(value).map_err(|e| StoreError::SchemaViolation(e.to_string()))?;
        record.validate(None)?;
        Ok(record)
    }

    /// Checks value ranges and, when a skill set is given, that the resume
    /// skill is one of them.
    pub fn validate(&self, known_skills: Option<&BTreeSet<String>>) -> Result<(), StoreError> {
        if let Some(scores) = &self.review.per_criterion_scores {
            scores.validate().map_err(|e| StoreError::SchemaViolation(e.to_string()))?;
        }
        if let Some(score) = self.paper.last_score {
            if !score.is_finite() {
                return Err(StoreError::SchemaViolation("paper.last_score is not finite".into()));
            }
        }
        if let Some(key) = self.extra.keys().find(|k| Self::SECTIONS.contains(&k.as_str())) {
            return Err(StoreError::SchemaViolation(format!("duplicate section `{key}`")));
        }
        if let Some(skills) = known_skills {
            let resume = &self.recovery.resume_skill;
            if !resume.is_empty() && !skills.contains(resume) {
                return Err(StoreError::SchemaViolation(format!(
                    "recovery.resume_skill `{resume}` is not in the dependency graph"
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("handoff serializes");
        text.push('\n');
        text
    }
}

impl Store {
    /// Validates and atomically replaces `handoff.json`.
    pub fn write_handoff(&self, record: &HandoffRecord) -> Result<std::path::PathBuf, StoreError> {
        self.write_handoff_checked(record, None)
    }

    pub fn write_handoff_checked(
        &self,
        record: &HandoffRecord,
        known_skills: Option<&BTreeSet<String>>,
    ) -> Result<std::path::PathBuf, StoreError> {
        record.validate(known_skills)?;
        self.write_atomic(HANDOFF_FILE, record.to_json().as_bytes())
    }

    pub fn load_handoff(&self) -> Result<HandoffLoad, StoreError> {
        let Some(bytes) = self.read(HANDOFF_FILE)? else {
            return Ok(HandoffLoad::Absent);
        };
        let value: serde_json::Value = match serde_json::from_slice(&bytes) {
            Ok(v) => v,
            Err(e) => return Ok(HandoffLoad::Corrupt { reason: e.to_string() }),
        };
        Ok(match HandoffRecord::from_value(value) {
            Ok(record) => HandoffLoad::Loaded(record),
            Err(e) => HandoffLoad::Corrupt { reason: e.to_string() },
        })
    }
}
