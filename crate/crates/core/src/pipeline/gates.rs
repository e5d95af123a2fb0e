//! The human gate registry in `gates.json`.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::definition::{GateKind, PipelineDefinition, RejectRoute};
use crate::stage::StageId;
use crate::store::{Store, StoreError, GATES_FILE};

/// Audit-log name under which gate decisions are recorded.
pub const GATE_AUDIT_NAME: &str = "human-gate";

#[derive(Debug, Error)]
pub enum GateError {
    #[error("no gate `{0}`")]
    UnknownGate(String),
    #[error("gate `{id}` was already resolved ({verdict})")]
    AlreadyResolved { id: String, verdict: GateVerdict },
    #[error("gate `{kind}` cannot be raised at stage {stage}")]
    WrongStage { kind: GateKind, stage: StageId },
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateVerdict {
    Approve,
    Reject,
    Modify,
}

impl GateVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            GateVerdict::Approve => "approve",
            GateVerdict::Reject => "reject",
            GateVerdict::Modify => "modify",
        }
    }

    /// Approve and modify both let the pipeline pass.
    pub fn passes(self) -> bool {
        self != GateVerdict::Reject
    }
}

impl fmt::Display for GateVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GateVerdict {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "approve" => Ok(GateVerdict::Approve),
            "reject" => Ok(GateVerdict::Reject),
            "modify" => Ok(GateVerdict::Modify),
            other => Err(format!("unknown verdict `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateDecision {
    pub verdict: GateVerdict,
    #[serde(default)]
    pub note: Option<String>,
    pub decided_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanGate {
    pub id: String,
    pub kind: GateKind,
    pub stage: StageId,
    /// What the gate is about: a step, dataset id or review round.
    pub subject: String,
    pub payload: serde_json::Value,
    pub raised_at: DateTime<Utc>,
    #[serde(default)]
    pub decision: Option<GateDecision>,
    /// A rejected selection gate whose loop has been started.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub looped: bool,
}

impl HumanGate {
    pub fn is_pending(&self) -> bool {
        self.decision.is_none()
    }

    pub fn passed(&self) -> bool {
        self.decision.as_ref().is_some_and(|d| d.verdict.passes())
    }
}

/// How the pipeline proceeds after a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateRoute {
    Unblocked,
    Loop,
    Halt,
}

pub fn route_for(kind: GateKind, verdict: GateVerdict) -> GateRoute {
    match (verdict.passes(), kind.reject_route()) {
        (true, _) => GateRoute::Unblocked,
        (false, RejectRoute::Loop) => GateRoute::Loop,
        (false, RejectRoute::Halt) => GateRoute::Halt,
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Registry {
    gates: Vec<HumanGate>,
}

fn load(store: &Store) -> Result<Registry, StoreError> {
    Ok(store.read_json(GATES_FILE)?.unwrap_or_default())
}

pub fn list_gates(store: &Store) -> Result<Vec<HumanGate>, StoreError> {
    Ok(load(store)?.gates)
}

pub fn get_gate(store: &Store, id: &str) -> Result<Option<HumanGate>, StoreError> {
    Ok(load(store)?.gates.into_iter().find(|g| g.id == id))
}

/// The most recent gate of `kind` about `subject`.
pub fn latest_gate(store: &Store, kind: GateKind, subject: &str) -> Result<Option<HumanGate>, StoreError> {
    Ok(load(store)?
        .gates
        .into_iter()
        .rev()
        .find(|g| g.kind == kind && g.subject == subject))
}

/// Records a pending gate with id `g<seq>-<kind>` and emits `gate_raised`.
pub fn raise_gate(
    store: &Store,
    def: &PipelineDefinition,
    kind: GateKind,
    stage: StageId,
    subject: &str,
    payload: serde_json::Value,
) -> Result<HumanGate, GateError> {
    if !def.gates[&kind].stage.admits(stage) {
        return Err(GateError::WrongStage { kind, stage });
    }
    let gate = store.transaction(|| -> Result<HumanGate, StoreError> {
        let mut reg = load(store)?;
        let gate = HumanGate {
            id: format!("g{:03}-{}", reg.gates.len() + 1, kind),
            kind,
            stage,
            subject: subject.to_string(),
            payload,
            raised_at: store.clock().now(),
            decision: None,
            looped: false,
        };
        reg.gates.push(gate.clone());
        store.write_json(GATES_FILE, &reg)?;
        Ok(gate)
    })?;
    store.emit_event("gate_raised", serde_json::to_value(&gate).expect("gate serializes"))?;
    Ok(gate)
}

/// Records a decision on a pending gate, audits it and emits
/// `gate_resolved`. Every caller (CLI, HTTP, in-process responder) goes
/// through here, so all paths write the same audit record.
pub fn resolve_gate(
    store: &Store,
    id: &str,
    verdict: GateVerdict,
    note: Option<&str>,
) -> Result<(HumanGate, GateRoute), GateError> {
    let note = note.map(|n| n.split_whitespace().collect::<Vec<_>>().join(" ")).filter(|n| !n.is_empty());
    let gate = store.transaction(|| -> Result<HumanGate, GateError> {
        let mut reg = load(store)?;
        let gate = reg
            .gates
            .iter_mut()
            .find(|g| g.id == id)
            .ok_or_else(|| GateError::UnknownGate(id.to_string()))?;
        if let Some(d) = &gate.decision {
            return Err(GateError::AlreadyResolved {
                id: id.to_string(),
                verdict: d.verdict,
            });
        }
        gate.decision = Some(GateDecision {
            verdict,
            note: note.clone(),
            decided_at: store.clock().now(),
        });
        let gate = gate.clone();
        store.write_json(GATES_FILE, &reg)?;
        Ok(gate)
    })?;
    let mut summary = format!("{} {} ({})", gate.id, verdict, gate.subject);
    if let Some(n) = &note {
        summary.push_str(&format!(": {n}"));
    }
    store.audit(GATE_AUDIT_NAME, &summary)?;
    let route = route_for(gate.kind, verdict);
    store.emit_event(
        "gate_resolved",
        serde_json::json!({ "gate": gate, "route": route }),
    )?;
    Ok((gate, route))
}

/// Marks a rejected loop-route gate as acted on, so the next visit to its
/// position raises a fresh gate.
pub fn mark_looped(store: &Store, id: &str) -> Result<(), GateError> {
    store.transaction(|| {
        let mut reg = load(store)?;
        let gate = reg
            .gates
            .iter_mut()
            .find(|g| g.id == id)
            .ok_or_else(|| GateError::UnknownGate(id.to_string()))?;
        gate.looped = true;
        store.write_json(GATES_FILE, &reg)?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::tests_support::definition;

    #[test]
    fn raise_resolve_twice() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let def = definition();
        let g = raise_gate(&store, &def, GateKind::IdeaSelection, StageId::IdeaDiscovery, "ideas", serde_json::json!({})).unwrap();
        assert_eq!(g.id, "g001-idea_selection");
        let (_, route) = resolve_gate(&store, &g.id, GateVerdict::Reject, Some("try\nagain")).unwrap();
        assert_eq!(route, GateRoute::Loop);
        assert!(matches!(
            resolve_gate(&store, &g.id, GateVerdict::Approve, None),
            Err(GateError::AlreadyResolved { verdict: GateVerdict::Reject, .. })
        ));
        assert!(matches!(resolve_gate(&store, "g999-x", GateVerdict::Approve, None), Err(GateError::UnknownGate(_))));
        let audit = store.audit_entries().unwrap();
        assert_eq!(audit.len(), 1);
        assert_eq!(audit[0].summary, "g001-idea_selection reject (ideas): try again");
    }

    #[test]
    fn wrong_stage_refused() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let def = definition();
        assert!(matches!(
            raise_gate(&store, &def, GateKind::SubmissionConfirmation, StageId::Launch, "x", serde_json::Value::Null),
            Err(GateError::WrongStage { .. })
        ));
        raise_gate(&store, &def, GateKind::BlockedStateResolution, StageId::Launch, "x", serde_json::Value::Null).unwrap();
    }

    #[test]
    fn reject_routes() {
        assert_eq!(route_for(GateKind::SubmissionConfirmation, GateVerdict::Reject), GateRoute::Halt);
        assert_eq!(route_for(GateKind::DataAccessAuthorization, GateVerdict::Reject), GateRoute::Halt);
        assert_eq!(route_for(GateKind::IdeaSelection, GateVerdict::Modify), GateRoute::Unblocked);
    }
}
