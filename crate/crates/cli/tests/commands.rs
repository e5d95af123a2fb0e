mod common;

use std::io::Cursor;

use harness_cli::commands;
use harness_cli::prompt::PromptResponder;
use harness_cli::{EXIT_BLOCKED, EXIT_HALTED, EXIT_LINT, EXIT_OK};
use harness_core::pipeline::{list_gates, GateKind, GateVerdict, LeavePending, RunOptions, ScriptedResponder};

use common::{corpus_dir, run_to_first_gate, workspace};

fn output(f: impl FnOnce(&mut Vec<u8>) -> i32) -> (i32, String) {
    let mut out = Vec::new();
    let code = f(&mut out);
    (code, String::from_utf8(out).unwrap())
}

#[test]
fn run_blocks_at_a_gate_with_exit_3() {
    let (_dir, ws) = workspace();
    let (code, text) = run_to_first_gate(&ws);
    assert_eq!(code, EXIT_BLOCKED);
    assert!(text.contains("blocked at gate"), "{text}");
    let pending: Vec<_> = list_gates(&ws.store).unwrap().into_iter().filter(|g| g.is_pending()).collect();
    assert_eq!(pending.len(), 1);
}

#[test]
fn deciding_then_resuming_moves_past_the_gate() {
    let (_dir, ws) = workspace();
    run_to_first_gate(&ws);
    let first = list_gates(&ws.store).unwrap().remove(0);
    let (code, text) =
        output(|o| commands::gates_decide(&ws.store, &first.id, GateVerdict::Approve, Some("fine"), o).unwrap());
    assert_eq!(code, EXIT_OK);
    assert!(text.contains("approve"), "{text}");
    let (code, _) = output(|o| commands::resume_run(&ws, &mut LeavePending, RunOptions::default(), o).unwrap());
    assert_eq!(code, EXIT_BLOCKED);
    let gates = list_gates(&ws.store).unwrap();
    assert!(gates.len() >= 2);
    assert_eq!(gates.iter().filter(|g| g.is_pending()).count(), 1);
    assert_ne!(gates.iter().find(|g| g.is_pending()).unwrap().id, first.id);
}

#[test]
fn approve_all_completes_with_exit_0() {
    let (_dir, ws) = workspace();
    let (code, text) =
        output(|o| commands::run(&ws, &mut ScriptedResponder::approve_all(), RunOptions::default(), o).unwrap());
    assert_eq!(code, EXIT_OK, "{text}");
    assert!(text.trim_end().ends_with("completed"));
    let (code, status) = output(|o| commands::status(&ws, false, o).unwrap());
    assert_eq!(code, EXIT_OK);
    assert!(status.contains("run: completed"), "{status}");
}

#[test]
fn rejected_submission_exits_4() {
    let (_dir, ws) = workspace();
    let mut responder =
        ScriptedResponder::approve_all().answer(GateKind::SubmissionConfirmation, GateVerdict::Reject, None);
    let (code, text) = output(|o| commands::run(&ws, &mut responder, RunOptions::default(), o).unwrap());
    assert_eq!(code, EXIT_HALTED);
    assert!(text.contains("rejected"), "{text}");
}

#[test]
fn lint_exit_codes() {
    let (code, text) = output(|o| commands::lint(&corpus_dir(), false, o).unwrap());
    assert_eq!(code, EXIT_OK, "{text}");

    let dir = tempfile::tempdir().unwrap();
    let skill = corpus_dir().join("skills/auto-review-loop/SKILL.md");
    let body = std::fs::read_to_string(skill).unwrap();
    let cut = body.find("\n## ").unwrap();
    let broken = dir.path().join("SKILL.md");
    std::fs::write(&broken, &body[..cut]).unwrap();
    let (code, text) = output(|o| commands::lint(&broken, true, o).unwrap());
    assert_eq!(code, EXIT_LINT, "{text}");
    let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(parsed.is_object());
}

#[test]
fn graph_export_formats() {
    let (_dir, ws) = workspace();
    let (_, dot) = output(|o| commands::graph_export(&ws, "dot", o).unwrap());
    assert!(dot.starts_with("digraph"), "{dot}");
    let (_, json) = output(|o| commands::graph_export(&ws, "json", o).unwrap());
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["nodes"].as_array().unwrap().len(), v["topo_order"].as_array().unwrap().len());
}

#[test]
fn telemetry_and_audit_after_a_run() {
    let (_dir, ws) = workspace();
    output(|o| commands::run(&ws, &mut ScriptedResponder::approve_all(), RunOptions::default(), o).unwrap());
    let (_, json) = output(|o| commands::telemetry_show(&ws.store, true, o).unwrap());
    let records: Vec<serde_json::Value> = serde_json::from_str(&json).unwrap();
    assert!(!records.is_empty());
    let (_, table) = output(|o| commands::telemetry_show(&ws.store, false, o).unwrap());
    assert!(table.contains(&format!("{} record(s)", records.len())));
    let (_, audit) = output(|o| commands::audit_show(&ws.store, o).unwrap());
    assert!(audit.lines().count() >= ws.corpus.definition.steps().len());
}

#[test]
fn prompt_responder_answers_gates() {
    let (_dir, ws) = workspace();
    let input = Cursor::new("maybe\napprove go ahead\n");
    let mut prompts = Vec::new();
    let mut responder = PromptResponder::new(input, &mut prompts);
    let (code, _) = output(|o| commands::run(&ws, &mut responder, RunOptions::default(), o).unwrap());
    // One gate answered, input exhausted at the next.
    assert_eq!(code, EXIT_BLOCKED);
    let shown = String::from_utf8(prompts).unwrap();
    assert!(shown.contains("unknown") || shown.contains("maybe"), "{shown}");
    let gates = list_gates(&ws.store).unwrap();
    let decided = gates[0].decision.as_ref().unwrap();
    assert_eq!(decided.verdict, GateVerdict::Approve);
    assert_eq!(decided.note.as_deref(), Some("go ahead"));
    assert!(gates[1].is_pending());
}

#[test]
fn deciding_twice_is_an_error() {
    let (_dir, ws) = workspace();
    run_to_first_gate(&ws);
    let id = list_gates(&ws.store).unwrap().remove(0).id;
    let mut sink = Vec::new();
    commands::gates_decide(&ws.store, &id, GateVerdict::Reject, None, &mut sink).unwrap();
    assert!(commands::gates_decide(&ws.store, &id, GateVerdict::Approve, None, &mut sink).is_err());
    assert!(commands::gates_decide(&ws.store, "no-such-gate", GateVerdict::Approve, None, &mut sink).is_err());
}
