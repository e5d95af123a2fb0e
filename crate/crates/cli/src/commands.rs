//! One function per CLI verb. Each writes human-readable output (or JSON
//! when asked) and returns the process exit code.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use harness_core::pipeline::{
    lint_path, resolve_gate, resume, run_pipeline, GateResponder, GateVerdict, HaltCause, PipelineError, RunEnv,
    RunOptions, RunReport, Terminal,
};
use harness_core::store::Store;

use crate::views::{audit_view, gates_view, state_view, telemetry_view, HandoffView, StateView};
use crate::{CliError, Workspace, EXIT_LINT, EXIT_OK};

fn json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    writeln!(out, "{}", serde_json::to_string_pretty(value).expect("view serializes"))?;
    Ok(())
}

fn report_terminal(out: &mut dyn Write, report: &RunReport) -> Result<i32, CliError> {
    if let Some(at) = &report.resumed_at {
        writeln!(out, "resumed at {at}")?;
    }
    for skill in &report.executed {
        writeln!(out, "done  {skill}")?;
    }
    for response in &report.responses {
        writeln!(out, "{}  {} ({})", response.class, response.diagnostic, response.response)?;
    }
    match &report.terminal {
        Terminal::Completed => writeln!(out, "completed")?,
        Terminal::BlockedAt { gate_id, kind } => {
            writeln!(out, "blocked at gate {gate_id} ({kind}); decide with `harness gates approve|reject {gate_id}`")?
        }
        Terminal::Halted(HaltCause::Error(c)) => writeln!(out, "halted: {} {}: {}", c.class, c.diagnostic, c.response)?,
        Terminal::Halted(HaltCause::GateRejected { gate_id, kind }) => {
            writeln!(out, "halted: gate {gate_id} ({kind}) rejected")?
        }
    }
    Ok(report.terminal.exit_code())
}

fn drive(
    ws: &Workspace,
    responder: &mut dyn GateResponder,
    options: RunOptions,
    out: &mut dyn Write,
    from_handoff: bool,
) -> Result<i32, CliError> {
    let backend = ws.backend()?;
    let mut env = RunEnv {
        corpus: &ws.corpus,
        store: &ws.store,
        backend: backend.as_ref(),
        responder,
        options,
    };
    let result = if from_handoff { resume(&mut env) } else { run_pipeline(&mut env) };
    match result {
        Ok(report) => report_terminal(out, &report),
        Err(PipelineError::Lint { errors, findings }) => {
            writeln!(out, "corpus has {errors} lint error(s):")?;
            for f in findings {
                writeln!(out, "  {f}")?;
            }
            Ok(EXIT_LINT)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn run(ws: &Workspace, responder: &mut dyn GateResponder, options: RunOptions, out: &mut dyn Write) -> Result<i32, CliError> {
    drive(ws, responder, options, out, false)
}

pub fn resume_run(
    ws: &Workspace,
    responder: &mut dyn GateResponder,
    options: RunOptions,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    drive(ws, responder, options, out, true)
}

fn print_state(out: &mut dyn Write, view: &StateView) -> Result<(), CliError> {
    match &view.handoff {
        HandoffView::Absent => writeln!(out, "handoff: none (a resume starts from the first step)")?,
        HandoffView::Corrupt { reason } => writeln!(out, "handoff: corrupt ({reason})")?,
        HandoffView::Loaded { record } => writeln!(
            out,
            "handoff: stage {} last {} next {}",
            record.pipeline.stage,
            if record.pipeline.last_completed_step.is_empty() { "-" } else { &record.pipeline.last_completed_step },
            if record.pipeline.next_step.is_empty() { "-" } else { &record.pipeline.next_step },
        )?,
    }
    writeln!(out, "run: {}", serde_json::to_value(view.run).expect("status").as_str().unwrap_or("?"))?;
    for stage in &view.stages {
        writeln!(
            out,
            "  {} {:<22} {:<9} {}/{}",
            stage.number,
            stage.stage.as_str(),
            serde_json::to_value(stage.status).expect("status").as_str().unwrap_or("?"),
            stage.completed_skills,
            stage.skills.len()
        )?;
    }
    for gate in &view.pending_gates {
        writeln!(out, "pending gate {} ({}) {}", gate.id, gate.kind, gate.subject)?;
    }
    for (thread, rounds) in &view.reviews {
        let scores: Vec<String> = rounds.iter().map(|r| format!("{:.2} {}", r.weighted, r.tier)).collect();
        writeln!(out, "review {thread}: {}", scores.join(" → "))?;
    }
    Ok(())
}

pub fn status(ws: &Workspace, as_json: bool, out: &mut dyn Write) -> Result<i32, CliError> {
    let view = state_view(&ws.store, &ws.corpus)?;
    if as_json {
        json(out, &view)?;
    } else {
        print_state(out, &view)?;
    }
    Ok(EXIT_OK)
}

pub fn gates_list(store: &Store, pending_only: bool, as_json: bool, out: &mut dyn Write) -> Result<i32, CliError> {
    let gates = gates_view(store, pending_only)?;
    if as_json {
        json(out, &gates)?;
        return Ok(EXIT_OK);
    }
    for g in gates {
        let decision = match &g.decision {
            None => "pending".to_string(),
            Some(d) => match &d.note {
                Some(n) => format!("{} ({n})", d.verdict),
                None => d.verdict.to_string(),
            },
        };
        writeln!(out, "{:<34} {:<28} {:<32} {decision}", g.id, g.kind.as_str(), g.subject)?;
    }
    Ok(EXIT_OK)
}

/// Records a decision exactly as the HTTP endpoint does.
pub fn gates_decide(
    store: &Store,
    id: &str,
    verdict: GateVerdict,
    note: Option<&str>,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let (gate, route) = resolve_gate(store, id, verdict, note)?;
    writeln!(
        out,
        "{} {verdict}; route {}; run `harness resume` to continue",
        gate.id,
        serde_json::to_value(route).expect("route").as_str().unwrap_or("?")
    )?;
    Ok(EXIT_OK)
}

pub fn lint(path: &Path, as_json: bool, out: &mut dyn Write) -> Result<i32, CliError> {
    let lint = lint_path(path)?;
    if as_json {
        json(out, &lint)?;
    } else {
        write!(out, "{}", lint.to_lines())?;
        writeln!(out, "{} file(s), {} error(s)", lint.files.len(), lint.error_count())?;
    }
    Ok(if lint.error_count() > 0 { EXIT_LINT } else { EXIT_OK })
}

#[derive(Serialize)]
struct GraphExport<'a> {
    nodes: Vec<&'a str>,
    edges: Vec<(&'a str, &'a str)>,
    topo_order: &'a [String],
}

pub fn graph_export(ws: &Workspace, format: &str, out: &mut dyn Write) -> Result<i32, CliError> {
    let graph = &ws.corpus.graph;
    match format {
        "json" => json(
            out,
            &GraphExport {
                nodes: graph.nodes().iter().map(String::as_str).collect(),
                edges: graph.edges().iter().map(|(a, b)| (a.as_str(), b.as_str())).collect(),
                topo_order: graph.topo_order(),
            },
        )?,
        _ => write!(out, "{}", graph.to_dot())?,
    }
    Ok(EXIT_OK)
}

pub fn telemetry_show(store: &Store, as_json: bool, out: &mut dyn Write) -> Result<i32, CliError> {
    let records = telemetry_view(store)?;
    if as_json {
        json(out, &records)?;
        return Ok(EXIT_OK);
    }
    writeln!(out, "{:<26} {:>6} {:>6} {:>10} {:>10} {:>7} {:>6}", "skill", "rounds", "calls", "in_tok", "out_tok", "min", "score")?;
    for r in &records {
        writeln!(
            out,
            "{:<26} {:>3}/{:<2} {:>6} {:>10} {:>10} {:>7.1} {:>6}",
            r.skill,
            r.rounds_used,
            r.rounds_max,
            r.external_llm_calls,
            r.total_input_tokens,
            r.total_output_tokens,
            r.wall_clock_minutes,
            r.final_score.map_or("-".to_string(), |s| format!("{s:.2}"))
        )?;
    }
    let (calls, tin, tout) = records.iter().fold((0, 0, 0), |(c, i, o), r| {
        (c + r.external_llm_calls, i + r.total_input_tokens, o + r.total_output_tokens)
    });
    writeln!(out, "{} record(s), {calls} call(s), {tin} input / {tout} output tokens", records.len())?;
    Ok(EXIT_OK)
}

pub fn audit_show(store: &Store, out: &mut dyn Write) -> Result<i32, CliError> {
    for e in audit_view(store)? {
        writeln!(out, "[{}] {}: {}", e.date, e.skill, e.summary)?;
    }
    Ok(EXIT_OK)
}
