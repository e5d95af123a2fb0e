//! One injected fault per error class. Each scenario checks that the class
//! was observed with its prescribed response and that the runner acted on it.

use harness_core::pipeline::{Classified, ErrorClass, HaltCause, RunReport, ScriptedResponder, Terminal};
use harness_core::stage::StageId;
use harness_core::store::HANDOFF_FILE;

use super::{script_with, Rig};

fn seen(report: &RunReport, class: ErrorClass) -> Result<&Classified, String> {
    let c = report
        .responses
        .iter()
        .find(|c| c.class == class)
        .ok_or_else(|| format!("{class} not observed; saw {:?}", report.responses))?;
    if c.response != class.prescribed_response() {
        return Err(format!("{class}: response `{}`", c.response));
    }
    Ok(c)
}

fn halted_with(report: &RunReport, class: ErrorClass) -> Result<&Classified, String> {
    match &report.terminal {
        Terminal::Halted(HaltCause::Error(c)) if c.class == class => {
            if c.response != class.prescribed_response() {
                return Err(format!("{class}: response `{}`", c.response));
            }
            Ok(c)
        }
        other => Err(format!("expected halt with {class}, got {other:?}")),
    }
}

fn completed(report: &RunReport) -> Result<(), String> {
    match report.terminal {
        Terminal::Completed => Ok(()),
        ref other => Err(format!("expected completion, got {other:?}")),
    }
}

fn check(cond: bool, msg: &str) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.to_string())
    }
}

/// Runs the scenario for one class and returns a short description of what
/// was observed.
pub fn fault_scenario(class: ErrorClass) -> Result<String, String> {
    let approve = || ScriptedResponder::approve_all();
    match class {
        ErrorClass::MissingInput => {
            let rig = Rig::new();
            rig.run(&mut approve(), Some(StageId::Launch)).err().ok_or("kill did not fire")?;
            rig.store.remove("BRIEF.md").map_err(|e| e.to_string())?;
            let report = rig.resume(&mut approve()).map_err(|e| e.to_string())?;
            let c = halted_with(&report, class)?;
            check(c.diagnostic.contains("run launcher first"), &c.diagnostic)?;
            Ok(c.diagnostic.clone())
        }
        ErrorClass::ToolUnavailable => {
            let rig = Rig::with_script(&script_with(">>> research-scout unavailable\n>>> research-scout\nScouting notes for {thread}.\n"));
            let report = rig.run(&mut approve(), Some(StageId::IdeaDiscovery)).err();
            check(report.is_some(), "kill did not fire")?;
            let audit = rig.audit_lines();
            let line = audit
                .iter()
                .find(|l| l.contains("degraded from research-scout to paper-writer"))
                .ok_or("no degradation logged")?;
            check(rig.store.exists("output/LIT_REVIEW_REPORT.md"), "fallback produced nothing")?;
            let events = rig.store.events_since(0).map_err(|e| e.to_string())?;
            let response = events
                .iter()
                .filter(|e| e.kind == "error_response")
                .find(|e| e.data["class"] == class.as_str())
                .ok_or("no error_response event")?;
            check(response.data["response"] == class.prescribed_response(), "wrong response text")?;
            Ok(line.clone())
        }
        ErrorClass::QualityBelowThreshold => {
            let rig = Rig::with_script(&script_with(
                ">>> peer-reviewer\nScore: 4.0 (N:4, R:4, L:4, C:4, I:4)\nVerdict: NOT READY\n- [N] incremental\n",
            ));
            let report = rig.run(&mut approve(), None).map_err(|e| e.to_string())?;
            let c = halted_with(&report, class)?;
            check(c.diagnostic.contains("refine-research"), &c.diagnostic)?;
            let gaps = rig.store.artifact_versions("GAP_REPORT").map_err(|e| e.to_string())?;
            check(!gaps.is_empty() || c.diagnostic.contains(".md"), "no gap report")?;
            check(rig.store.exists("output/refine-logs/FINAL_PROPOSAL.md"), "partial output missing")?;
            Ok(c.diagnostic.clone())
        }
        ErrorClass::StateCorruption => {
            let rig = Rig::new();
            rig.run(&mut approve(), Some(StageId::IdeaDiscovery)).err().ok_or("kill did not fire")?;
            rig.store.write_atomic(HANDOFF_FILE, b"{ not json").map_err(|e| e.to_string())?;
            let report = rig.resume(&mut approve()).map_err(|e| e.to_string())?;
            let c = seen(&report, class)?;
            completed(&report)?;
            check(report.executed.first().map(String::as_str) == Some("data-download"), "restart point wrong")?;
            Ok(c.diagnostic.clone())
        }
        ErrorClass::ResourceLimit => {
            let mut rig = Rig::new();
            rig.corpus.config.runtime.max_write_bytes = 32;
            rig.corpus.config.runtime.chunk_bytes = 7;
            let report = rig.run(&mut approve(), None).map_err(|e| e.to_string())?;
            let c = seen(&report, class)?;
            completed(&report)?;
            let brief = rig.store.read_to_string("BRIEF.md").map_err(|e| e.to_string())?.unwrap_or_default();
            check(brief.contains("Produced by orchestrator"), "chunked write lost content")?;
            check(!rig.store.exists("BRIEF.md.partial"), "partial file left behind")?;
            Ok(c.diagnostic.clone())
        }
        ErrorClass::ExternalTimeout => {
            let rig = Rig::with_script(&script_with(">>> research-scout timeout\n>>> research-scout\nScouting notes for {thread}.\n"));
            let report = rig.run(&mut approve(), Some(StageId::IdeaDiscovery)).err();
            check(report.is_some(), "single timeout was not retried")?;
            let twice = Rig::with_script(&script_with(">>> research-scout timeout\n>>> research-scout timeout\n"));
            let report = twice.run(&mut approve(), None).map_err(|e| e.to_string())?;
            let c = halted_with(&report, class)?;
            check(c.diagnostic.contains("research-scout"), &c.diagnostic)?;
            check(!twice.audit_lines().iter().any(|l| l.starts_with("lit-review:")), "lit-review recorded as done")?;
            Ok(c.diagnostic.clone())
        }
    }
}
