//! `logs/events.jsonl`: one JSON object per state transition, numbered from 1.

use std::fs::{self, OpenOptions};
use std::io::Write;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{Store, StoreError, EVENTS_FILE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub ts: DateTime<Utc>,
    pub kind: String,
    pub data: serde_json::Value,
}

impl Store {
    /// Appends an event and returns it with its sequence number.
    pub fn emit_event(&self, kind: &str, data: serde_json::Value) -> Result<Event, StoreError> {
        let path = self.resolve(EVENTS_FILE)?;
        let _guard = self.write_mutex.lock().expect("write mutex");
        let seq = match fs::read_to_string(&path) {
            Ok(text) => text.lines().filter(|l| !l.trim().is_empty()).count() as u64 + 1,
            Err(_) => 1,
        };
        let event = Event {
            seq,
            ts: self.clock.now(),
            kind: kind.to_string(),
            data,
        };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| StoreError::io(&path, e))?;
        let line = serde_json::to_string(&event).map_err(|e| StoreError::SchemaViolation(e.to_string()))?;
        file.write_all(format!("{line}\n").as_bytes())
            .map_err(|e| StoreError::io(&path, e))?;
        Ok(event)
    }

    /// Events with `seq > after`, in order. Unparseable lines are skipped.
    pub fn events_since(&self, after: u64) -> Result<Vec<Event>, StoreError> {
        Ok(self
            .read_lines(EVENTS_FILE)?
            .iter()
            .filter_map(|l| serde_json::from_str::<Event>(l).ok())
            .filter(|e| e.seq > after)
            .collect())
    }
}
