//! Read-only views over a store, shared by the CLI and the HTTP surface.
//! Tiers, weighted scores and stage statuses are computed here so clients
//! only display them.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use harness_core::pipeline::{list_gates, read_telemetry, Corpus, HumanGate, TelemetryRecord};
use harness_core::review::{confidence_gate, decide, ReviewRound, ScoreVector, Tier};
use harness_core::stage::StageId;
use harness_core::store::{AuditEntry, Event, HandoffLoad, HandoffRecord, Store};

use crate::CliError;

/// Audit entries shown in the state view.
pub const RECENT_AUDIT: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum HandoffView {
    Absent,
    Loaded { record: Box<HandoffRecord> },
    Corrupt { reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Idle,
    Running,
    Completed,
    Blocked,
    Halted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Pending,
    Running,
    Blocked,
    Completed,
    Halted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageView {
    pub stage: StageId,
    pub number: usize,
    pub status: StageStatus,
    pub skills: Vec<String>,
    pub completed_skills: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundView {
    pub round_no: u32,
    pub scores: ScoreVector,
    pub weighted: f64,
    pub tier: Tier,
    pub accepted: bool,
    pub verdict_label: String,
    pub reviewer: String,
    pub reviewer_quality: Tier,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateView {
    pub handoff: HandoffView,
    pub run: RunStatus,
    /// Payload of the most recent `run_finished` event.
    pub terminal: Option<serde_json::Value>,
    pub current_skill: Option<String>,
    pub stages: Vec<StageView>,
    pub pending_gates: Vec<HumanGate>,
    pub recent_audit: Vec<AuditEntry>,
    /// Round history per review thread.
    pub reviews: BTreeMap<String, Vec<RoundView>>,
    pub last_event_seq: u64,
}

fn run_status(events: &[Event]) -> (RunStatus, Option<serde_json::Value>) {
    let last_start = events.iter().rposition(|e| e.kind == "run_started");
    let last_finish = events.iter().rposition(|e| e.kind == "run_finished");
    let terminal = last_finish.map(|i| events[i].data.clone());
    let status = match (last_start, last_finish) {
        (None, _) => RunStatus::Idle,
        (Some(s), Some(f)) if f > s => match events[f].data["state"].as_str() {
            Some("completed") => RunStatus::Completed,
            Some("blocked_at") => RunStatus::Blocked,
            _ => RunStatus::Halted,
        },
        // Started and not finished: still going, or killed mid-run.
        (Some(_), _) => RunStatus::Running,
    };
    (status, terminal)
}

pub fn review_rounds(store: &Store, corpus: &Corpus) -> Result<BTreeMap<String, Vec<RoundView>>, CliError> {
    let policy = &corpus.config.policy;
    let mut out = BTreeMap::new();
    for step in corpus.definition.steps() {
        if step.spec.review.is_none() {
            continue;
        }
        let thread = &step.spec.skill;
        let Ok(Some(state)) = store.read_json::<serde_json::Value>(&format!("review/{thread}.json")) else {
            continue;
        };
        let rounds: Vec<ReviewRound> = serde_json::from_value(state["rounds"].clone()).unwrap_or_default();
        let views = rounds
            .into_iter()
            .map(|r| {
                let d = decide(&r.scores, policy);
                RoundView {
                    round_no: r.round_no,
                    scores: r.scores,
                    weighted: d.weighted,
                    tier: confidence_gate(d.weighted, policy.threshold),
                    accepted: d.accepted,
                    verdict_label: r.verdict_label,
                    reviewer: r.reviewer,
                    reviewer_quality: r.reviewer_quality,
                }
            })
            .collect();
        out.insert(thread.clone(), views);
    }
    Ok(out)
}

pub fn state_view(store: &Store, corpus: &Corpus) -> Result<StateView, CliError> {
    let handoff = match store.load_handoff()? {
        HandoffLoad::Absent => HandoffView::Absent,
        HandoffLoad::Loaded(record) => HandoffView::Loaded { record: Box::new(record) },
        HandoffLoad::Corrupt { reason } => HandoffView::Corrupt { reason },
    };
    let events = store.events_since(0)?;
    let (run, terminal) = run_status(&events);
    let audit = store.audit_entries()?;
    let done: BTreeSet<&str> = audit.iter().map(|e| e.skill.as_str()).collect();
    let gates = list_gates(store)?;
    let pending: Vec<HumanGate> = gates.into_iter().filter(HumanGate::is_pending).collect();

    let steps = corpus.definition.steps();
    let current_skill = match &handoff {
        HandoffView::Loaded { record } if !record.pipeline.next_step.is_empty() => Some(record.pipeline.next_step.clone()),
        HandoffView::Loaded { .. } => None,
        _ => steps.iter().find(|s| !done.contains(s.spec.skill.as_str())).map(|s| s.spec.skill.clone()),
    };
    let current_stage = current_skill
        .as_deref()
        .and_then(|skill| steps.iter().find(|s| s.spec.skill == skill))
        .map(|s| s.stage);
    let blocked_stage = pending.first().map(|g| g.stage);

    let stages = corpus
        .definition
        .stages
        .iter()
        .map(|binding| {
            let skills: Vec<String> = binding.steps.iter().map(|s| s.skill.clone()).collect();
            let completed_skills = skills.iter().filter(|s| done.contains(s.as_str())).count();
            let here = Some(binding.stage) == current_stage;
            let status = if Some(binding.stage) == blocked_stage {
                StageStatus::Blocked
            } else if blocked_stage.is_none() && here && run == RunStatus::Halted {
                StageStatus::Halted
            } else if blocked_stage.is_none() && here && run == RunStatus::Running {
                StageStatus::Running
            } else if completed_skills == skills.len() {
                StageStatus::Completed
            } else {
                StageStatus::Pending
            };
            StageView {
                stage: binding.stage,
                number: binding.stage.number(),
                status,
                skills,
                completed_skills,
            }
        })
        .collect();

    let recent_audit = audit.iter().rev().take(RECENT_AUDIT).rev().cloned().collect();
    Ok(StateView {
        handoff,
        run,
        terminal,
        current_skill,
        stages,
        pending_gates: pending,
        recent_audit,
        reviews: review_rounds(store, corpus)?,
        last_event_seq: events.last().map_or(0, |e| e.seq),
    })
}

pub fn gates_view(store: &Store, pending_only: bool) -> Result<Vec<HumanGate>, CliError> {
    let gates = list_gates(store)?;
    Ok(if pending_only {
        gates.into_iter().filter(HumanGate::is_pending).collect()
    } else {
        gates
    })
}

pub fn audit_view(store: &Store) -> Result<Vec<AuditEntry>, CliError> {
    Ok(store.audit_entries()?)
}

pub fn telemetry_view(store: &Store) -> Result<Vec<TelemetryRecord>, CliError> {
    Ok(read_telemetry(store)?)
}
