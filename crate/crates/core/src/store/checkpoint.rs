//! Per-skill checkpoints with a 24-hour staleness rule.

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use super::{Store, StoreError, CHECKPOINT_ARCHIVE_DIR, CHECKPOINT_DIR};
use crate::review::ScoreVector;

pub const STALE_AFTER_HOURS: i64 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointStatus {
    InProgress,
    Completed,
    Blocked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointRecord {
    pub skill: String,
    pub phase: String,
    pub round: u32,
    #[serde(rename = "threadId", alias = "thread_id")]
    pub thread_id: String,
    #[serde(default)]
    pub scores: Option<ScoreVector>,
    pub status: CheckpointStatus,
    pub timestamp: DateTime<Utc>,
}

impl CheckpointRecord {
    /// Stale once strictly more than 24 hours old.
    pub fn is_stale(&self, now: DateTime<Utc>) -> bool {
        now - self.timestamp > Duration::hours(STALE_AFTER_HOURS)
    }
}

fn checkpoint_path(skill: &str) -> String {
    format!("{CHECKPOINT_DIR}/{skill}.json")
}

impl Store {
    pub fn save_checkpoint(&self, record: &CheckpointRecord) -> Result<(), StoreError> {
        if !crate::document::is_kebab_name(&record.skill) {
            return Err(StoreError::SchemaViolation(format!("bad skill name `{}`", record.skill)));
        }
        if let Some(scores) = &record.scores {
            scores.validate().map_err(|e| StoreError::SchemaViolation(e.to_string()))?;
        }
        self.write_json(&checkpoint_path(&record.skill), record).map(|_| ())
    }

    /// Loads a fresh checkpoint. Stale checkpoints are moved into the
    /// archive directory and reported as absent; unreadable ones are
    /// `CorruptCheckpoint`.
    pub fn load_checkpoint(&self, skill: &str) -> Result<Option<CheckpointRecord>, StoreError> {
        let rel = checkpoint_path(skill);
        let Some(bytes) = self.read(&rel)? else {
            return Ok(None);
        };
        let record: CheckpointRecord = serde_json::from_slice(&bytes).map_err(|e| StoreError::CorruptCheckpoint {
            skill: skill.to_string(),
            reason: e.to_string(),
        })?;
        if record.skill != skill {
            return Err(StoreError::CorruptCheckpoint {
                skill: skill.to_string(),
                reason: format!("record names skill `{}`", record.skill),
            });
        }
        if record.is_stale(self.clock().now()) {
            self.archive_checkpoint(skill, &record)?;
            return Ok(None);
        }
        Ok(Some(record))
    }

    fn archive_checkpoint(&self, skill: &str, record: &CheckpointRecord) -> Result<(), StoreError> {
        let stamp = record.timestamp.format("%Y%m%dT%H%M%SZ");
        let dir = self.resolve(CHECKPOINT_ARCHIVE_DIR)?;
        std::fs::create_dir_all(&dir).map_err(|e| StoreError::io(&dir, e))?;
        let mut target = dir.join(format!("{skill}-{stamp}.json"));
        let mut n = 1;
        while target.exists() {
            target = dir.join(format!("{skill}-{stamp}-{n}.json"));
            n += 1;
        }
        let source = self.resolve(&checkpoint_path(skill))?;
        std::fs::rename(&source, &target).map_err(|e| StoreError::io(&source, e))
    }

    pub fn delete_checkpoint(&self, skill: &str) -> Result<bool, StoreError> {
        self.remove(&checkpoint_path(skill))
    }

    pub fn archived_checkpoints(&self, skill: &str) -> Result<Vec<String>, StoreError> {
        let dir = self.resolve(CHECKPOINT_ARCHIVE_DIR)?;
        let Ok(read) = std::fs::read_dir(&dir) else {
            return Ok(Vec::new());
        };
        let prefix = format!("{skill}-");
        let mut names: Vec<String> = read
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.starts_with(&prefix))
            .collect();
        names.sort();
        Ok(names)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use chrono::TimeZone;

    use super::*;
    use crate::clock::ManualClock;

    fn record(ts: DateTime<Utc>) -> CheckpointRecord {
        CheckpointRecord {
            skill: "refine-research".into(),
            phase: "scoring".into(),
            round: 2,
            thread_id: "t-17".into(),
            scores: None,
            status: CheckpointStatus::InProgress,
            timestamp: ts,
        }
    }

    #[test]
    fn staleness_boundary() {
        let t0 = Utc.with_ymd_and_hms(2026, 4, 16, 12, 0, 0).unwrap();
        let r = record(t0);
        assert!(!r.is_stale(t0 + Duration::hours(24)));
        assert!(r.is_stale(t0 + Duration::hours(24) + Duration::seconds(1)));
    }

    #[test]
    fn stale_checkpoint_is_archived() {
        let dir = tempfile::tempdir().unwrap();
        let t0 = Utc.with_ymd_and_hms(2026, 4, 16, 12, 0, 0).unwrap();
        let clock = Arc::new(ManualClock::new(t0));
        let store = Store::with_clock(dir.path(), clock.clone()).unwrap();
        store.save_checkpoint(&record(t0)).unwrap();
        clock.advance(Duration::hours(23) + Duration::minutes(59));
        assert_eq!(store.load_checkpoint("refine-research").unwrap(), Some(record(t0)));
        clock.set(t0 + Duration::hours(24) + Duration::seconds(1));
        assert_eq!(store.load_checkpoint("refine-research").unwrap(), None);
        assert_eq!(store.archived_checkpoints("refine-research").unwrap().len(), 1);
        assert!(!store.exists("checkpoints/refine-research.json"));
    }

    #[test]
    fn serialized_keys_follow_schema() {
        let t0 = Utc.with_ymd_and_hms(2026, 4, 16, 12, 0, 0).unwrap();
        let v = serde_json::to_value(record(t0)).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        for k in ["phase", "round", "threadId", "scores", "status", "timestamp"] {
            assert!(keys.contains(&k), "{k}");
        }
    }
}
