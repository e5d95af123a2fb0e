//! Dataset provenance records.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{AccessClass, DatasetValidation, ProvenanceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationStatus {
    Pending,
    Passed,
    Failed,
}

impl ValidationStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ValidationStatus::Pending => "pending",
            ValidationStatus::Passed => "passed",
            ValidationStatus::Failed => "failed",
        }
    }
}

impl fmt::Display for ValidationStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ValidationStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pending" => Ok(ValidationStatus::Pending),
            "passed" => Ok(ValidationStatus::Passed),
            "failed" => Ok(ValidationStatus::Failed),
            other => Err(format!("unknown validation status `{other}`")),
        }
    }
}

/// One dataset's provenance. The validation status is only changed by
/// [`DatasetRecord::record_validation`] (or read back from a manifest).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub source_name: String,
    pub url: String,
    pub tier: u8,
    pub access_class: AccessClass,
    pub retrieval_date: NaiveDate,
    pub license: String,
    pub variables: Vec<String>,
    pub size_bytes: u64,
    pub checksum: Option<String>,
    validation: ValidationStatus,
    pub notes: String,
}

impl DatasetRecord {
    pub fn new(id: &str, source_name: &str, url: &str, tier: u8, access_class: AccessClass, retrieval_date: NaiveDate) -> Self {
        Self {
            id: id.to_string(),
            source_name: source_name.to_string(),
            url: url.to_string(),
            tier,
            access_class,
            retrieval_date,
            license: String::new(),
            variables: Vec::new(),
            size_bytes: 0,
            checksum: None,
            validation: ValidationStatus::Pending,
            notes: String::new(),
        }
    }

    pub fn validation(&self) -> ValidationStatus {
        self.validation
    }

    pub(crate) fn set_validation(&mut self, status: ValidationStatus) {
        self.validation = status;
    }

    /// Applies a validation run: status, observed size, and the computed
    /// checksum when the record has none.
    pub fn record_validation(&mut self, outcome: &DatasetValidation) {
        self.validation = if outcome.passed {
            ValidationStatus::Passed
        } else {
            ValidationStatus::Failed
        };
        self.size_bytes = outcome.size_bytes;
        if self.checksum.is_none() {
            self.checksum = Some(outcome.sha256.clone());
        }
    }

    pub fn validate(&self) -> Result<(), ProvenanceError> {
        let bad = |reason: String| ProvenanceError::InvalidRecord {
            id: self.id.clone(),
            reason,
        };
        if !is_dataset_id(&self.id) {
            return Err(bad("id must be letters, digits, `-`, `_` or `.`".into()));
        }
        if !(1..=7).contains(&self.tier) {
            return Err(bad(format!("tier {} is outside 1-7", self.tier)));
        }
        if self.validation == ValidationStatus::Passed && self.checksum.as_deref().is_none_or(str::is_empty) {
            return Err(bad("validation passed without a checksum".into()));
        }
        for (field, value) in [
            ("source_name", &self.source_name),
            ("url", &self.url),
            ("license", &self.license),
            ("notes", &self.notes),
        ] {
            if value.trim() != value {
                return Err(bad(format!("{field} has surrounding whitespace")));
            }
        }
        if let Some(v) = self.variables.iter().find(|v| v.is_empty() || v.trim() != v.as_str()) {
            return Err(bad(format!("variable name `{v}` is empty or padded")));
        }
        if let Some(c) = &self.checksum {
            if c.is_empty() || c.chars().any(char::is_whitespace) {
                return Err(bad("checksum must be a single token".into()));
            }
        }
        Ok(())
    }
}

pub fn is_dataset_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}
