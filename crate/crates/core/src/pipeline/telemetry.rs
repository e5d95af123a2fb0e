//! Per-skill cost accounting, appended to `logs/telemetry.jsonl`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::store::{Store, StoreError, TELEMETRY_FILE};

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("telemetry schema violation: {0}")]
    SchemaViolation(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Exactly nine fields, in this order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TelemetryRecord {
    pub skill: String,
    pub rounds_used: u32,
    pub rounds_max: u32,
    pub external_llm_calls: u64,
    pub total_input_tokens: u64,
    pub total_output_tokens: u64,
    #[serde(serialize_with = "whole_as_integer", deserialize_with = "finite_number")]
    pub wall_clock_minutes: f64,
    /// `null` when the skill produces no score.
    pub final_score: Option<f64>,
    pub artifacts_produced: Vec<String>,
}

pub const TELEMETRY_FIELDS: [&str; 9] = [
    "skill",
    "rounds_used",
    "rounds_max",
    "external_llm_calls",
    "total_input_tokens",
    "total_output_tokens",
    "wall_clock_minutes",
    "final_score",
    "artifacts_produced",
];

/// `22` stays `22` rather than becoming `22.0`.
fn whole_as_integer<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.fract() == 0.0 && v.abs() < 9.0e15 {
        s.serialize_i64(*v as i64)
    } else {
        s.serialize_f64(*v)
    }
}

fn finite_number<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    let v = f64::deserialize(d)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(serde::de::Error::custom("wall_clock_minutes must be finite"))
    }
}

impl TelemetryRecord {
    pub fn validate(&self) -> Result<(), TelemetryError> {
        let bad = |m: String| Err(TelemetryError::SchemaViolation(m));
        if self.skill.is_empty() {
            return bad("skill is empty".into());
        }
        if self.rounds_used > self.rounds_max {
            return bad(format!("rounds_used {} exceeds rounds_max {}", self.rounds_used, self.rounds_max));
        }
        if !(self.wall_clock_minutes.is_finite() && self.wall_clock_minutes >= 0.0) {
            return bad(format!("wall_clock_minutes {} is not a non-negative number", self.wall_clock_minutes));
        }
        if let Some(score) = self.final_score {
            if !(0.0..=10.0).contains(&score) {
                return bad(format!("final_score {score} is outside [0, 10]"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("telemetry serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TelemetryError> {
        let record: Self = serde_json::from_str(text).map_err(|e| TelemetryError::SchemaViolation(e.to_string()))?;
        record.validate()?;
        Ok(record)
    }
}

/// Appends a record and returns its 1-based ledger position.
pub fn emit_telemetry(store: &Store, record: &TelemetryRecord) -> Result<usize, TelemetryError> {
    record.validate()?;
    store.transaction(|| {
        store.append_line(TELEMETRY_FILE, &record.to_json())?;
        Ok(read_telemetry(store)?.len())
    })
}

pub fn read_telemetry(store: &Store) -> Result<Vec<TelemetryRecord>, TelemetryError> {
    store
        .read_lines(TELEMETRY_FILE)?
        .iter()
        .filter(|l| !l.trim().is_empty())
        .map(|l| TelemetryRecord::from_json(l))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TelemetryRecord {
        TelemetryRecord {
            skill: "refine-research".into(),
            rounds_used: 4,
            rounds_max: 5,
            external_llm_calls: 4,
            total_input_tokens: 128_000,
            total_output_tokens: 24_000,
            wall_clock_minutes: 22.0,
            final_score: Some(9.2),
            artifacts_produced: vec!["FINAL_PROPOSAL.md".into(), "REFINE_STATE.json".into()],
        }
    }

    #[test]
    fn rounds_invariant() {
        let mut r = sample();
        r.rounds_used = 6;
        assert!(matches!(r.validate(), Err(TelemetryError::SchemaViolation(_))));
    }

    #[test]
    fn unknown_field_refused() {
        let mut v = serde_json::to_value(sample()).unwrap();
        v["cost_usd"] = 1.into();
        assert!(TelemetryRecord::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn ledger_positions() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        for i in 1..=3 {
            let mut r = sample();
            r.rounds_used = i;
            assert_eq!(emit_telemetry(&store, &r).unwrap(), i as usize);
        }
        let all = read_telemetry(&store).unwrap();
        assert_eq!(all.iter().map(|r| r.rounds_used).collect::<Vec<_>>(), [1, 2, 3]);
    }
}
