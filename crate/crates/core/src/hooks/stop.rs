//! The stop hook: memory, then handoff, then notifications.

use serde::{Deserialize, Serialize};

use crate::store::{HandoffLoad, HandoffRecord, Store};

/// What the stop hook flushes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub handoff: HandoffRecord,
    /// Free-text summary for `memory/MEMORY.md`.
    pub memory_summary: String,
    pub notifications: Vec<String>,
}

impl SessionState {
    /// A summary derived from the handoff when none is supplied.
    pub fn from_handoff(handoff: HandoffRecord) -> Self {
        let memory_summary = render_memory(&handoff);
        let notifications = handoff.notifications.clone();
        Self {
            handoff,
            memory_summary,
            notifications,
        }
    }
}

pub fn render_memory(handoff: &HandoffRecord) -> String {
    let p = &handoff.pipeline;
    let mut out = format!(
        "# Pipeline memory\n\n- Stage: {}\n- Last completed step: {}\n- Next step: {}\n",
        p.stage, p.last_completed_step, p.next_step
    );
    if !handoff.review.decision.is_empty() {
        out.push_str(&format!("- Review decision: {}\n", handoff.review.decision));
    }
    if let Some(score) = handoff.paper.last_score {
        out.push_str(&format!("- Last score: {score}\n"));
    }
    if !handoff.recovery.resume_skill.is_empty() {
        out.push_str(&format!("- Resume skill: {}\n", handoff.recovery.resume_skill));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopFailure {
    /// 1 = memory, 2 = handoff, 3 = notifications.
    pub step: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopReport {
    pub memory_updated: bool,
    pub handoff_written: bool,
    pub notifications_emitted: bool,
    pub failure: Option<StopFailure>,
}

impl StopReport {
    pub fn ok(&self) -> bool {
        self.failure.is_none()
    }
}

/// Runs the three flush steps in order, stopping at the first failure.
/// Earlier steps' effects stay in place.
pub fn run_stop_hook(session: &SessionState, store: &Store) -> StopReport {
    let mut report = StopReport {
        memory_updated: false,
        handoff_written: false,
        notifications_emitted: false,
        failure: None,
    };
    let fail = |report: &mut StopReport, step: usize, message: String| {
        report.failure = Some(StopFailure { step, message });
    };

    if let Err(e) = store.write_memory(&session.memory_summary) {
        fail(&mut report, 1, e.to_string());
        return report;
    }
    report.memory_updated = true;

    let written = store.write_handoff(&session.handoff).and_then(|_| store.load_handoff());
    match written {
        Ok(HandoffLoad::Loaded(back)) if back == session.handoff => report.handoff_written = true,
        Ok(other) => {
            fail(&mut report, 2, format!("handoff did not read back: {other:?}"));
            return report;
        }
        Err(e) => {
            fail(&mut report, 2, e.to_string());
            return report;
        }
    }

    for message in &session.notifications {
        if let Err(e) = store.emit_event("notification", serde_json::json!({ "message": message })) {
            fail(&mut report, 3, e.to_string());
            return report;
        }
    }
    if let Err(e) = store.emit_event(
        "session_flushed",
        serde_json::json!({
            "stage": session.handoff.pipeline.stage,
            "last_completed_step": session.handoff.pipeline.last_completed_step,
        }),
    ) {
        fail(&mut report, 3, e.to_string());
        return report;
    }
    report.notifications_emitted = true;
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{FaultPoint, HANDOFF_FILE};

    fn session() -> SessionState {
        let mut s = SessionState::from_handoff(crate::store::tests_support::sample_handoff());
        s.notifications = vec!["round 2 scored 6.5".into()];
        s
    }

    #[test]
    fn flushes_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let report = run_stop_hook(&session(), &store);
        assert!(report.ok() && report.memory_updated && report.handoff_written && report.notifications_emitted);
        let HandoffLoad::Loaded(h) = store.load_handoff().unwrap() else { panic!() };
        assert_eq!(h.pipeline.stage, crate::stage::StageId::AdversarialReview);
        assert!(h.review.per_criterion_scores.is_some());
        assert!(store.read_memory().unwrap().unwrap().contains("adversarial_review"));
        assert_eq!(store.events_since(0).unwrap()[0].kind, "notification");
    }

    #[test]
    fn idempotent_handoff() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        run_stop_hook(&session(), &store);
        let first = store.read(HANDOFF_FILE).unwrap().unwrap();
        run_stop_hook(&session(), &store);
        assert_eq!(store.read(HANDOFF_FILE).unwrap().unwrap(), first);
    }

    #[test]
    fn handoff_fault_keeps_memory() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        store.inject_fault(HANDOFF_FILE, FaultPoint::BeforeRename);
        let report = run_stop_hook(&session(), &store);
        assert!(report.memory_updated);
        assert!(!report.handoff_written && !report.notifications_emitted);
        assert_eq!(report.failure.unwrap().step, 2);
        assert!(store.read_memory().unwrap().is_some());
        assert!(store.events_since(0).unwrap().is_empty());
    }
}
