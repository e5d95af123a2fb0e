//! The append-only audit log, one `[YYYY-MM-DD] <skill>: <summary>` line per
//! entry.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Store, StoreError, AUDIT_FILE};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AuditEntry {
    pub date: NaiveDate,
    pub skill: String,
    pub summary: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("not an audit line: `{0}`")]
pub struct ParseAuditError(pub String);

impl AuditEntry {
    pub fn new(date: NaiveDate, skill: &str, summary: &str) -> Result<Self, StoreError> {
        if summary.contains(['\n', '\r']) {
            return Err(StoreError::MultilineSummary);
        }
        if skill.is_empty() || skill.contains([':', ' ', '\n', '\r', '[', ']']) {
            return Err(StoreError::InvalidAuditEntry(format!("bad skill name `{skill}`")));
        }
        Ok(Self {
            date,
            skill: skill.to_string(),
            summary: summary.to_string(),
        })
    }
}

impl fmt::Display for AuditEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}: {}", self.date.format("%Y-%m-%d"), self.skill, self.summary)
    }
}

impl FromStr for AuditEntry {
    type Err = ParseAuditError;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let err = || ParseAuditError(line.to_string());
        let rest = line.strip_prefix('[').ok_or_else(err)?;
        let (date, rest) = rest.split_once("] ").ok_or_else(err)?;
        let date = NaiveDate::parse_from_str(date, "%Y-%m-%d").map_err(|_| err())?;
        let (skill, summary) = rest.split_once(": ").ok_or_else(err)?;
        if skill.is_empty() || skill.contains(' ') {
            return Err(err());
        }
        Ok(Self {
            date,
            skill: skill.to_string(),
            summary: summary.to_string(),
        })
    }
}

impl Store {
    /// Appends one entry and returns the new number of entries.
    pub fn append_audit(&self, entry: &AuditEntry) -> Result<usize, StoreError> {
        if entry.summary.contains(['\n', '\r']) {
            return Err(StoreError::MultilineSummary);
        }
        self.append_line(AUDIT_FILE, &entry.to_string())?;
        self.audit_len()
    }

    /// Records an entry dated today by the store's clock.
    pub fn audit(&self, skill: &str, summary: &str) -> Result<usize, StoreError> {
        let entry = AuditEntry::new(self.clock().now().date_naive(), skill, summary)?;
        self.append_audit(&entry)
    }

    pub fn audit_entries(&self) -> Result<Vec<AuditEntry>, StoreError> {
        Ok(self
            .read_lines(AUDIT_FILE)?
            .iter()
            .filter_map(|line| line.parse().ok())
            .collect())
    }

    pub fn audit_len(&self) -> Result<usize, StoreError> {
        Ok(self.audit_entries()?.len())
    }
}
