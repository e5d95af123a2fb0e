//! Executes the plan: positional gates, per-skill phases under contract
//! checks, review loops, data acquisition, telemetry and the state flush.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::Write as _;
use std::time::Duration;

use serde::Serialize;

use super::corpus::Corpus;
use super::definition::{FeatureFlags, GateKind, PlannedStep, StageRef};
use super::gates::{latest_gate, mark_looped, raise_gate, resolve_gate, GateError, GateVerdict, HumanGate};
use super::taxonomy::{classify_error, Classified, ErrorClass, Failure};
use super::telemetry::{emit_telemetry, TelemetryRecord};
use super::PipelineError;
use crate::backend::{invoke_with_retry, AgentBackend, AgentInvocation, AgentResult, BackendError, TokenUsage};
use crate::contract::{evaluate, AuditDelta, ContractPhase, EvalContext, FsSnapshot};
use crate::document::{validate_agent, validate_skill, SkillDocument, ValidationReport};
use crate::hooks::{pre_tool_gate, run_stop_hook, PolicySet, SessionState, ToolCall, Verdict};
use crate::provenance::{
    classify_access, exceeds_size_gate, rank_sources, upsert_record, validate_dataset, DatasetRecord,
    EQUAL_CRITERIA_WEIGHTS,
};
use crate::review::{
    confidence_gate, run_review_loop, Decision, Guidance, LoopOutcome, LoopReport, LoopSpec, ReviewError,
    ReviewObserver, ReviewRound, Reviewer, Tier,
};
use crate::stage::StageId;
use crate::store::{
    CheckpointRecord, CheckpointStatus, ExperimentSection, HandoffLoad, HandoffRecord, PaperSection, PipelineSection,
    RecoverySection, ReviewSection, SessionSection, Store, StoreError, TokenBudgetSection,
};

/// Audit name of the session-boundary marker written on resume.
pub const SESSION_AUDIT_NAME: &str = "session";
/// Final response of each skill's latest phase, kept for resume.
pub const RESPONSES_DIR: &str = "logs/responses";
/// Response line with which an agent proposes synthetic data for a dataset.
pub const SYNTHETIC_PROPOSAL: &str = "synthetic-fallback:";

const PHASE_REVIEW: &str = "review";
const PHASE_FINALIZE: &str = "finalize";
const PHASE_DONE: &str = "done";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GateAnswer {
    pub verdict: GateVerdict,
    pub note: Option<String>,
}

impl GateAnswer {
    pub fn new(verdict: GateVerdict, note: Option<&str>) -> Self {
        Self {
            verdict,
            note: note.map(str::to_string),
        }
    }
}

/// Supplies decisions for gates as they come up. `None` leaves the gate
/// pending and stops the run at it.
pub trait GateResponder {
    fn respond(&mut self, gate: &HumanGate) -> Option<GateAnswer>;
}

/// Never decides; every gate blocks until resolved out of band.
#[derive(Debug, Default, Clone, Copy)]
pub struct LeavePending;

impl GateResponder for LeavePending {
    fn respond(&mut self, _: &HumanGate) -> Option<GateAnswer> {
        None
    }
}

/// Queued answers per gate kind, then an optional default.
#[derive(Debug, Default, Clone)]
pub struct ScriptedResponder {
    queued: BTreeMap<GateKind, VecDeque<GateAnswer>>,
    otherwise: Option<GateAnswer>,
    /// Ids of every gate this responder was asked about, in order.
    pub asked: Vec<String>,
}

impl ScriptedResponder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn approve_all() -> Self {
        Self::new().otherwise(GateVerdict::Approve)
    }

    pub fn answer(mut self, kind: GateKind, verdict: GateVerdict, note: Option<&str>) -> Self {
        self.queued.entry(kind).or_default().push_back(GateAnswer::new(verdict, note));
        self
    }

    pub fn otherwise(mut self, verdict: GateVerdict) -> Self {
        self.otherwise = Some(GateAnswer::new(verdict, None));
        self
    }
}

impl GateResponder for ScriptedResponder {
    fn respond(&mut self, gate: &HumanGate) -> Option<GateAnswer> {
        self.asked.push(gate.id.clone());
        self.queued
            .get_mut(&gate.kind)
            .and_then(VecDeque::pop_front)
            .or_else(|| self.otherwise.clone())
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stop with [`PipelineError::Killed`] once this stage's last step has
    /// finished, as a crash would.
    pub kill_after_stage: Option<StageId>,
    pub session_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "cause", rename_all = "snake_case")]
pub enum HaltCause {
    Error(Classified),
    GateRejected { gate_id: String, kind: GateKind },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Terminal {
    Completed,
    BlockedAt { gate_id: String, kind: GateKind },
    Halted(HaltCause),
}

impl Terminal {
    /// CLI exit status: 0 completed, 3 blocked, 4 halted.
    pub fn exit_code(&self) -> i32 {
        match self {
            Terminal::Completed => 0,
            Terminal::BlockedAt { .. } => 3,
            Terminal::Halted(_) => 4,
        }
    }

    pub fn error_class(&self) -> Option<ErrorClass> {
        match self {
            Terminal::Halted(HaltCause::Error(c)) => Some(c.class),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub terminal: Terminal,
    /// Skills completed by this invocation, in order.
    pub executed: Vec<String>,
    /// Every taxonomy response applied during the invocation.
    pub responses: Vec<Classified>,
    /// Skill the invocation resumed at, for `resume`.
    pub resumed_at: Option<String>,
}

/// Everything a run needs.
pub struct RunEnv<'a> {
    pub corpus: &'a Corpus,
    pub store: &'a Store,
    pub backend: &'a dyn AgentBackend,
    pub responder: &'a mut dyn GateResponder,
    pub options: RunOptions,
}

/// Document and cross-document lint at error severity.
pub fn preflight(corpus: &Corpus) -> ValidationReport {
    let mut report = ValidationReport::default();
    for doc in corpus.skills.values() {
        report.extend(validate_skill(doc));
    }
    for doc in corpus.agents.values() {
        report.extend(validate_agent(doc));
    }
    report.extend(corpus.cross_check());
    report
}

fn check_preflight(corpus: &Corpus) -> Result<(), PipelineError> {
    let report = preflight(corpus);
    match report.error_count() {
        0 => Ok(()),
        errors => Err(PipelineError::Lint {
            errors,
            findings: report.errors().map(ToString::to_string).collect(),
        }),
    }
}

/// Runs the plan from the first step.
pub fn run_pipeline(env: &mut RunEnv<'_>) -> Result<RunReport, PipelineError> {
    check_preflight(env.corpus)?;
    let _lock = env.store.lock_writer()?;
    let exec = Exec::new(env);
    exec.store.emit_event("run_started", serde_json::json!({ "from": 0 }))?;
    exec.finish(0, None)
}

/// Continues from the position recorded in the handoff. An absent handoff
/// starts from the first step; a corrupt one restarts the first unfinished
/// skill from its first phase.
pub fn resume(env: &mut RunEnv<'_>) -> Result<RunReport, PipelineError> {
    check_preflight(env.corpus)?;
    let _lock = env.store.lock_writer()?;
    let mut exec = Exec::new(env);
    let steps = exec.corpus.definition.steps();
    let index = match exec.store.load_handoff()? {
        HandoffLoad::Absent => 0,
        HandoffLoad::Loaded(handoff) => {
            exec.restore(&handoff);
            let next = &handoff.pipeline.next_step;
            if next.is_empty() {
                steps.len()
            } else {
                exec.corpus
                    .definition
                    .step_index(next)
                    .ok_or_else(|| PipelineError::Definition(format!("handoff names unknown step `{next}`")))?
            }
        }
        HandoffLoad::Corrupt { reason } => {
            exec.observe(&Failure::StateCorruption {
                what: crate::store::HANDOFF_FILE.into(),
                reason,
            })?;
            exec.first_unfinished()?
        }
    };
    let at = steps.get(index).map_or("end".to_string(), |s| s.spec.skill.clone());
    exec.store.audit(SESSION_AUDIT_NAME, &format!("resumed at {at}"))?;
    exec.store.emit_event("run_started", serde_json::json!({ "from": index, "resumed_at": at }))?;
    exec.finish(index, Some(at))
}

/// Outcome of a gate lookup.
enum GateState {
    Passed(HumanGate),
    Pending(HumanGate),
    Rejected(HumanGate),
}

impl GateState {
    fn of(gate: HumanGate) -> Self {
        match &gate.decision {
            None => GateState::Pending(gate),
            Some(d) if d.verdict.passes() => GateState::Passed(gate),
            Some(_) => GateState::Rejected(gate),
        }
    }
}

/// What a step or check tells the driver.
enum Flow {
    Continue,
    Stop(Terminal),
    /// Jump back to a plan position (reject on a loop-route gate).
    Jump(usize),
}

/// Where a skill picks up.
enum Start {
    Phase(usize),
    Review,
    Finalize,
}

#[derive(Default)]
struct ReviewMemo {
    scores: Option<crate::review::ScoreVector>,
    decision: String,
    action_items: Vec<String>,
    last_score: Option<f64>,
    rounds: u32,
}

struct Exec<'a> {
    corpus: &'a Corpus,
    store: &'a Store,
    backend: &'a dyn AgentBackend,
    responder: &'a mut dyn GateResponder,
    options: RunOptions,
    flags: FeatureFlags,
    policy: PolicySet,
    executed: Vec<String>,
    responses: Vec<Classified>,
    last_completed: String,
    review: ReviewMemo,
    notes: Vec<String>,
}

fn basename(path: &str) -> String {
    path.rsplit('/').next().unwrap_or(path).to_string()
}

fn review_state_path(thread: &str) -> String {
    format!("review/{thread}.json")
}

fn response_path(skill: &str) -> String {
    format!("{RESPONSES_DIR}/{skill}.md")
}

/// Writes `content` in pieces of `chunk` bytes through a `.partial` file,
/// then renames it into place.
pub fn write_chunked(store: &Store, path: &str, content: &[u8], chunk: usize) -> Result<usize, StoreError> {
    let partial = format!("{path}.partial");
    let mut pieces = content.chunks(chunk.max(1));
    store.write_atomic(&partial, pieces.next().unwrap_or(&[]))?;
    let partial_abs = store.resolve(&partial)?;
    let mut count = 1;
    {
        let mut file = std::fs::OpenOptions::new()
            .append(true)
            .open(&partial_abs)
            .map_err(|e| StoreError::io(&partial_abs, e))?;
        for piece in pieces {
            file.write_all(piece).map_err(|e| StoreError::io(&partial_abs, e))?;
            count += 1;
        }
        file.sync_all().map_err(|e| StoreError::io(&partial_abs, e))?;
    }
    let target = store.resolve(path)?;
    std::fs::rename(&partial_abs, &target).map_err(|e| StoreError::io(&target, e))?;
    Ok(count)
}

impl<'a> Exec<'a> {
    fn new(env: &'a mut RunEnv<'_>) -> Self {
        let corpus = env.corpus;
        Self {
            corpus,
            store: env.store,
            backend: env.backend,
            responder: &mut *env.responder,
            options: env.options.clone(),
            flags: corpus.feature_flags(),
            policy: PolicySet::for_store(env.store.root()).with_agents(corpus.agents.values()),
            executed: Vec::new(),
            responses: Vec::new(),
            last_completed: String::new(),
            review: ReviewMemo::default(),
            notes: Vec::new(),
        }
    }

    fn restore(&mut self, handoff: &HandoffRecord) {
        self.last_completed = handoff.pipeline.last_completed_step.clone();
        self.review.scores = handoff.review.per_criterion_scores;
        self.review.decision = handoff.review.decision.clone();
        self.review.action_items = handoff.review.action_items.clone();
        self.review.last_score = handoff.paper.last_score;
    }

    /// First step whose checkpoint is not a completion marker. Its
    /// checkpoint and review state are removed so it restarts cleanly.
    fn first_unfinished(&mut self) -> Result<usize, PipelineError> {
        let steps = self.corpus.definition.steps();
        for step in &steps {
            let skill = &step.spec.skill;
            let done = match self.store.load_checkpoint(skill) {
                Ok(Some(c)) => c.phase == PHASE_DONE && c.status == CheckpointStatus::Completed,
                Ok(None) => false,
                Err(StoreError::CorruptCheckpoint { .. }) => false,
                Err(e) => return Err(e.into()),
            };
            if !done {
                self.store.delete_checkpoint(skill)?;
                self.store.remove(&review_state_path(skill))?;
                return Ok(step.index);
            }
            self.last_completed = skill.clone();
        }
        Ok(steps.len())
    }

    fn observe(&mut self, failure: &Failure) -> Result<Classified, PipelineError> {
        let classified = classify_error(failure);
        self.store.emit_event(
            "error_response",
            serde_json::json!({
                "class": classified.class,
                "response": classified.response,
                "diagnostic": classified.diagnostic,
                "failure": failure,
            }),
        )?;
        self.responses.push(classified.clone());
        Ok(classified)
    }

    fn halt(&mut self, failure: Failure) -> Result<Flow, PipelineError> {
        let classified = self.observe(&failure)?;
        Ok(Flow::Stop(Terminal::Halted(HaltCause::Error(classified))))
    }

    fn finish(mut self, index: usize, resumed_at: Option<String>) -> Result<RunReport, PipelineError> {
        let terminal = self.drive(index)?;
        self.store.emit_event("run_finished", serde_json::to_value(&terminal).expect("terminal serializes"))?;
        Ok(RunReport {
            terminal,
            executed: self.executed,
            responses: self.responses,
            resumed_at,
        })
    }

    fn drive(&mut self, mut index: usize) -> Result<Terminal, PipelineError> {
        let def = &self.corpus.definition;
        let steps = def.steps();
        let mut current_stage = None;
        'plan: loop {
            for kind in def.gates_at(index) {
                match self.positional_gate(kind)? {
                    Flow::Continue => {}
                    Flow::Jump(to) => {
                        index = to;
                        continue 'plan;
                    }
                    Flow::Stop(terminal) => return self.stop(index, terminal),
                }
            }
            let Some(step) = steps.get(index).copied() else {
                self.notes.push("pipeline completed".into());
                self.flush(index)?;
                return Ok(Terminal::Completed);
            };
            if current_stage != Some(step.stage) {
                current_stage = Some(step.stage);
                self.store.emit_event(
                    "stage_started",
                    serde_json::json!({ "stage": step.stage, "number": step.stage.number() }),
                )?;
            }
            match self.run_step(step)? {
                Flow::Continue => {}
                Flow::Jump(to) => {
                    index = to;
                    continue 'plan;
                }
                Flow::Stop(terminal) => return self.stop(index, terminal),
            }
            index += 1;
            self.notes.push(format!("completed {}", step.spec.skill));
            self.flush(index)?;
            let stage_done = steps.get(index).is_none_or(|s| s.stage != step.stage);
            if stage_done && self.options.kill_after_stage == Some(step.stage) {
                return Err(PipelineError::Killed { stage: step.stage });
            }
        }
    }

    fn stop(&mut self, index: usize, terminal: Terminal) -> Result<Terminal, PipelineError> {
        self.notes.push(match &terminal {
            Terminal::Completed => "pipeline completed".into(),
            Terminal::BlockedAt { gate_id, .. } => format!("blocked at gate {gate_id}"),
            Terminal::Halted(HaltCause::Error(c)) => format!("halted: {}", c.class),
            Terminal::Halted(HaltCause::GateRejected { gate_id, .. }) => format!("halted: gate {gate_id} rejected"),
        });
        self.flush(index)?;
        Ok(terminal)
    }

    /// The stop-hook flush: memory, handoff pointing at plan position
    /// `next`, notifications. Skipped entirely when hooks are disabled.
    fn flush(&mut self, next: usize) -> Result<(), PipelineError> {
        let notes = std::mem::take(&mut self.notes);
        if !self.flags.hooks_enabled {
            return Ok(());
        }
        let steps = self.corpus.definition.steps();
        let (stage, next_step) = match steps.get(next) {
            Some(s) => (s.stage, s.spec.skill.clone()),
            None => (StageId::Submission, String::new()),
        };
        let files_to_read = self
            .corpus
            .skills
            .get(&self.last_completed)
            .map(|d| d.canonical_outputs.clone())
            .unwrap_or_default();
        let used = self.backend.usage().total();
        let handoff = HandoffRecord {
            pipeline: PipelineSection {
                stage,
                last_completed_step: self.last_completed.clone(),
                next_step: next_step.clone(),
            },
            review: ReviewSection {
                per_criterion_scores: self.review.scores,
                decision: self.review.decision.clone(),
                action_items: self.review.action_items.clone(),
            },
            experiment: ExperimentSection::default(),
            paper: PaperSection {
                last_score: self.review.last_score,
                ..PaperSection::default()
            },
            token_budget: TokenBudgetSection {
                used,
                remaining: self.corpus.config.runtime.token_budget.saturating_sub(used),
            },
            recovery: RecoverySection {
                files_to_read,
                resume_skill: next_step,
            },
            session: SessionSection {
                id: self.options.session_id.clone().unwrap_or_else(|| "session".into()),
                ended_at: self.store.clock().now(),
            },
            notifications: notes.clone(),
            extra: BTreeMap::new(),
        };
        let report = run_stop_hook(&SessionState::from_handoff(handoff), self.store);
        if let Some(failure) = report.failure {
            return Err(PipelineError::Flush(failure.message));
        }
        if let Some(hook) = &self.corpus.config.runtime.notify_hook {
            for note in &notes {
                notify(hook, note);
            }
        }
        Ok(())
    }

    /// Looks up (raising if needed) the gate for `subject` and asks the
    /// responder when it is pending.
    fn gate(
        &mut self,
        kind: GateKind,
        stage: StageId,
        subject: &str,
        payload: serde_json::Value,
        fresh: bool,
    ) -> Result<GateState, PipelineError> {
        let existing = if fresh { None } else { latest_gate(self.store, kind, subject)? };
        let gate = match existing {
            Some(g) if !g.is_pending() => return Ok(GateState::of(g)),
            Some(g) => g,
            None => raise_gate(self.store, &self.corpus.definition, kind, stage, subject, payload)?,
        };
        let Some(answer) = self.responder.respond(&gate) else {
            return Ok(GateState::Pending(gate));
        };
        match resolve_gate(self.store, &gate.id, answer.verdict, answer.note.as_deref()) {
            Ok((g, _)) => Ok(GateState::of(g)),
            Err(GateError::AlreadyResolved { .. }) => {
                let g = super::gates::get_gate(self.store, &gate.id)?.expect("resolved gate exists");
                Ok(GateState::of(g))
            }
            Err(e) => Err(e.into()),
        }
    }

    fn positional_gate(&mut self, kind: GateKind) -> Result<Flow, PipelineError> {
        let def = &self.corpus.definition;
        let att = &def.gates[&kind];
        let StageRef::Stage(stage) = att.stage else {
            unreachable!("positional gates name a stage")
        };
        let subject = kind.as_str();
        let fresh = latest_gate(self.store, kind, subject)?.is_some_and(|g| g.looped);
        let artifacts: Vec<String> = att
            .after
            .iter()
            .chain(&att.before)
            .filter_map(|s| self.corpus.skills.get(s))
            .flat_map(|d| d.canonical_outputs.clone())
            .collect();
        let payload = serde_json::json!({
            "stage": stage,
            "after": att.after,
            "before": att.before,
            "last_completed": self.last_completed,
            "artifacts": artifacts,
        });
        match self.gate(kind, stage, subject, payload, fresh)? {
            GateState::Passed(_) => Ok(Flow::Continue),
            GateState::Pending(g) => Ok(Flow::Stop(Terminal::BlockedAt { gate_id: g.id, kind })),
            GateState::Rejected(g) => match kind.reject_route() {
                super::definition::RejectRoute::Loop => {
                    mark_looped(self.store, &g.id)?;
                    Ok(Flow::Jump(def.stage_start(stage)))
                }
                super::definition::RejectRoute::Halt => {
                    Ok(Flow::Stop(Terminal::Halted(HaltCause::GateRejected { gate_id: g.id, kind })))
                }
            },
        }
    }

    /// A blocked-state gate: approval accepts the failure and continues.
    fn blocked_state(&mut self, stage: StageId, subject: &str, payload: serde_json::Value) -> Result<Flow, PipelineError> {
        let kind = GateKind::BlockedStateResolution;
        Ok(match self.gate(kind, stage, subject, payload, false)? {
            GateState::Passed(_) => Flow::Continue,
            GateState::Pending(g) => Flow::Stop(Terminal::BlockedAt { gate_id: g.id, kind }),
            GateState::Rejected(g) => Flow::Stop(Terminal::Halted(HaltCause::GateRejected { gate_id: g.id, kind })),
        })
    }

    fn state_value(&self, step: PlannedStep<'_>) -> serde_json::Value {
        serde_json::json!({
            "skill": step.spec.skill,
            "stage": step.stage,
            "round": self.review.rounds,
            "last_score": self.review.last_score,
        })
    }

    fn check_contract(
        &mut self,
        step: PlannedStep<'_>,
        doc: &SkillDocument,
        contract_id: &str,
        side: ContractPhase,
        phase_name: &str,
        audit: Option<&AuditDelta>,
    ) -> Result<Flow, PipelineError> {
        let block = doc.contract(contract_id).ok_or_else(|| {
            PipelineError::Corpus(format!("skill `{}` references unknown contract `{contract_id}`", doc.name()))
        })?;
        let snapshot =
            FsSnapshot::capture(self.store.root()).map_err(|e| StoreError::io(self.store.root(), e))?;
        let state = self.state_value(step);
        let bindings = BTreeMap::from([
            ("SKILL".to_string(), step.spec.skill.clone()),
            ("STAGE".to_string(), step.stage.to_string()),
        ]);
        let ctx = EvalContext {
            files: &snapshot,
            state: &state,
            bindings: &bindings,
            constants: &doc.constants,
            producers: Some(&self.corpus.graph),
            audit,
            owning_skill: Some(doc.name()),
        };
        let outcome = evaluate(block, side, &ctx)?;
        if outcome.satisfied {
            return Ok(Flow::Continue);
        }
        if side == ContractPhase::Pre {
            if let Some(missing) = outcome.failed.iter().find_map(|f| f.missing_input.clone()) {
                return self.halt(Failure::MissingInput {
                    path: missing.path,
                    producer: missing.producer,
                });
            }
        }
        let label = match side {
            ContractPhase::Pre => "entry",
            ContractPhase::Post => "exit",
        };
        let subject = format!("{}:{phase_name}:{label}", step.spec.skill);
        let payload = serde_json::json!({ "contract": contract_id, "failed": outcome.failed });
        self.blocked_state(step.stage, &subject, payload)
    }

    fn checkpoint(&self, skill: &str, phase: &str, round: u32, status: CheckpointStatus) -> Result<(), StoreError> {
        self.store.save_checkpoint(&CheckpointRecord {
            skill: skill.to_string(),
            phase: phase.to_string(),
            round,
            thread_id: skill.to_string(),
            scores: None,
            status,
            timestamp: self.store.clock().now(),
        })
    }

    fn start_point(&mut self, doc: &SkillDocument) -> Result<Start, PipelineError> {
        let skill = doc.name();
        match self.store.load_checkpoint(skill) {
            Ok(None) => Ok(Start::Phase(0)),
            Ok(Some(c)) if c.phase == PHASE_DONE => {
                self.store.remove(&review_state_path(skill))?;
                Ok(Start::Phase(0))
            }
            Ok(Some(c)) if c.phase == PHASE_REVIEW => Ok(Start::Review),
            Ok(Some(c)) if c.phase == PHASE_FINALIZE => Ok(Start::Finalize),
            Ok(Some(c)) => match doc.phases.iter().position(|p| p.name == c.phase && p.ordinal == c.round) {
                Some(i) => Ok(Start::Phase(i + 1)),
                None => Ok(Start::Phase(0)),
            },
            Err(StoreError::CorruptCheckpoint { skill: s, reason }) => {
                self.observe(&Failure::StateCorruption {
                    what: format!("checkpoint for {s}"),
                    reason,
                })?;
                self.store.delete_checkpoint(skill)?;
                self.store.remove(&review_state_path(skill))?;
                Ok(Start::Phase(0))
            }
            Err(e) => Err(e.into()),
        }
    }

    fn payload(&self, step: PlannedStep<'_>, doc: &SkillDocument, phase: usize) -> Result<String, PipelineError> {
        let p = &doc.phases[phase];
        let mut out = format!(
            "# {} / Phase {}: {}\n\nStage: {}\n\n{}\n",
            doc.name(),
            p.ordinal,
            p.name,
            step.stage,
            p.actions.trim()
        );
        let reads: Vec<&String> = self
            .corpus
            .graph
            .io_index()
            .iter()
            .filter(|(_, io)| io.consumers.contains(doc.name()))
            .map(|(path, _)| path)
            .collect();
        for path in reads {
            if let Some(text) = self.store.read_to_string(path)? {
                out.push_str(&format!("\n## Input: {path}\n\n{}\n", text.trim_end()));
            }
        }
        Ok(out)
    }

    /// Logs every agent-side write through the policy gate; a blocked
    /// write is removed.
    fn gate_writes(&mut self, agent: &str, result: &AgentResult) -> Result<Option<Failure>, PipelineError> {
        if !self.flags.hooks_enabled {
            return Ok(None);
        }
        for path in &result.files_written {
            if let Some(failure) = self.gate_write(agent, path)? {
                self.store.remove(path)?;
                return Ok(Some(failure));
            }
        }
        Ok(None)
    }

    fn gate_write(&mut self, agent: &str, path: &str) -> Result<Option<Failure>, PipelineError> {
        let decision = pre_tool_gate(&ToolCall::new(agent, "Write").target(path), &self.policy, self.store)?;
        Ok(match decision.verdict {
            Verdict::Allow => None,
            Verdict::Block => Some(Failure::ToolUnavailable {
                agent: agent.to_string(),
                reason: format!("write to {path} blocked by {}", decision.rule),
                fallback: None,
            }),
        })
    }

    fn invoke_once(&mut self, agent: &str, payload: String, thread: &str) -> Result<AgentResult, BackendError> {
        let budget = self.corpus.agent(agent).map(|a| a.token_budget).unwrap_or_default();
        let invocation = AgentInvocation::new(agent, payload, thread).with_budget(budget);
        let backoff = Duration::from_millis(self.corpus.config.runtime.retry_backoff_ms);
        let out = invoke_with_retry(self.backend, &invocation, backoff)?;
        if out.retried {
            let _ = self.observe(&Failure::ExternalTimeout {
                agent: agent.to_string(),
                attempts: 1,
            });
        }
        Ok(out.result)
    }

    /// One agent call with the taxonomy responses applied: timeouts retry
    /// once, an unavailable agent falls back, and an oversized payload is
    /// sent in chunks.
    fn invoke(
        &mut self,
        skill: &str,
        agent: &mut String,
        fallback: Option<&str>,
        payload: String,
    ) -> Result<Result<AgentResult, Failure>, PipelineError> {
        match self.invoke_once(agent, payload.clone(), skill) {
            Ok(result) => Ok(Ok(result)),
            Err(BackendError::Timeout { .. }) => Ok(Err(Failure::ExternalTimeout {
                agent: agent.clone(),
                attempts: 2,
            })),
            Err(BackendError::Unavailable { reason, .. }) => match fallback.filter(|f| f != agent) {
                Some(local) => {
                    self.observe(&Failure::ToolUnavailable {
                        agent: agent.clone(),
                        reason: reason.clone(),
                        fallback: Some(local.to_string()),
                    })?;
                    self.store.audit(skill, &format!("degraded from {agent} to {local} ({reason})"))?;
                    *agent = local.to_string();
                    self.invoke(skill, agent, None, payload)
                }
                None => Ok(Err(Failure::ToolUnavailable {
                    agent: agent.clone(),
                    reason,
                    fallback: None,
                })),
            },
            Err(BackendError::BudgetExceeded { estimated, max }) => {
                self.observe(&Failure::ResourceLimit {
                    what: "payload tokens".into(),
                    size: estimated,
                    limit: max,
                })?;
                // ⌈words × 1.3⌉ ≤ max
                let per_chunk = ((max * 10) / 13).max(1) as usize;
                let words: Vec<&str> = payload.split_whitespace().collect();
                let mut merged = AgentResult::default();
                let mut raws = Vec::new();
                for piece in words.chunks(per_chunk) {
                    match self.invoke_once(agent, piece.join(" "), skill) {
                        Ok(r) => {
                            merged.tokens += r.tokens;
                            merged.files_written.extend(r.files_written);
                            raws.push(r.raw);
                        }
                        Err(e) => return Ok(Err(Failure::from_backend(&e, 2))),
                    }
                }
                let tokens = merged.tokens;
                let files = merged.files_written;
                let mut result = AgentResult::from_raw(raws.join("\n"), tokens);
                result.files_written = files;
                Ok(Ok(result))
            }
            Err(e) => Ok(Err(Failure::from_backend(&e, 1))),
        }
    }

    fn run_step(&mut self, step: PlannedStep<'_>) -> Result<Flow, PipelineError> {
        let spec = step.spec;
        let skill = spec.skill.as_str();
        let doc = self.corpus.skill(skill)?;
        let t0 = self.store.clock().now();
        let usage0 = self.backend.usage();
        let calls0 = self.backend.calls();
        let audit0 = self.store.audit_len()?;
        self.store.emit_event("skill_started", serde_json::json!({ "skill": skill, "stage": step.stage }))?;

        let mut segment = Segment {
            skill: skill.to_string(),
            t0,
            usage0,
            calls0,
            rounds_used: 0,
            rounds_max: spec.review.as_ref().map_or(1, |r| r.max_rounds),
            final_score: None,
            artifacts: Vec::new(),
        };
        let flow = self.step_body(step, doc, audit0, &mut segment)?;
        self.emit_segment(&segment)?;
        if matches!(flow, Flow::Continue) {
            self.checkpoint(skill, PHASE_DONE, 0, CheckpointStatus::Completed)?;
            self.executed.push(skill.to_string());
            self.last_completed = skill.to_string();
            self.store.emit_event("skill_completed", serde_json::json!({ "skill": skill, "stage": step.stage }))?;
        }
        Ok(flow)
    }

    fn emit_segment(&mut self, seg: &Segment) -> Result<(), PipelineError> {
        let usage = self.backend.usage();
        let calls = self.backend.calls() - seg.calls0;
        if calls == 0 && seg.artifacts.is_empty() {
            return Ok(());
        }
        let delta = TokenUsage {
            input: usage.input - seg.usage0.input,
            output: usage.output - seg.usage0.output,
        };
        let seconds = (self.store.clock().now() - seg.t0).num_milliseconds().max(0) as f64 / 1000.0;
        let record = TelemetryRecord {
            skill: seg.skill.clone(),
            rounds_used: seg.rounds_used.min(seg.rounds_max),
            rounds_max: seg.rounds_max,
            external_llm_calls: calls,
            total_input_tokens: delta.input,
            total_output_tokens: delta.output,
            wall_clock_minutes: (seconds / 60.0 * 100.0).round() / 100.0,
            final_score: seg.final_score.map(|s| (s * 100.0).round() / 100.0),
            artifacts_produced: seg.artifacts.clone(),
        };
        emit_telemetry(self.store, &record)?;
        self.store.emit_event("telemetry", serde_json::to_value(&record).expect("telemetry serializes"))?;
        Ok(())
    }

    fn step_body(
        &mut self,
        step: PlannedStep<'_>,
        doc: &SkillDocument,
        audit0: usize,
        seg: &mut Segment,
    ) -> Result<Flow, PipelineError> {
        let spec = step.spec;
        let skill = spec.skill.as_str();
        let start = self.start_point(doc)?;

        if let Start::Phase(first) = start {
            if first == 0 {
                self.store.remove(&written_log(skill))?;
            }
            if spec.acquires_data && self.flags.manifest_enforced {
                if let flow @ (Flow::Stop(_) | Flow::Jump(_)) = self.data_access_gates(step)? {
                    return Ok(flow);
                }
            }
            let mut agent = spec.agent.clone();
            for i in first..doc.phases.len() {
                let phase = &doc.phases[i];
                if let Some(id) = &phase.entry {
                    if let flow @ (Flow::Stop(_) | Flow::Jump(_)) =
                        self.check_contract(step, doc, id, ContractPhase::Pre, &phase.name, None)?
                    {
                        return Ok(flow);
                    }
                }
                let payload = self.payload(step, doc, i)?;
                let result = match self.invoke(skill, &mut agent, spec.fallback_agent.as_deref(), payload)? {
                    Ok(r) => r,
                    Err(failure) => return self.halt(failure),
                };
                seg.rounds_used = seg.rounds_used.max(u32::from(spec.review.is_none()));
                if let Some(failure) = self.gate_writes(&agent, &result)? {
                    return self.halt(failure);
                }
                for path in &result.files_written {
                    self.store.append_line(&written_log(skill), path)?;
                }
                self.store.write_atomic(&response_path(skill), result.raw.as_bytes())?;
                self.checkpoint(skill, &phase.name, phase.ordinal, CheckpointStatus::InProgress)?;
                let last = i + 1 == doc.phases.len();
                if let (Some(id), false) = (&phase.exit, last) {
                    if let flow @ (Flow::Stop(_) | Flow::Jump(_)) =
                        self.check_contract(step, doc, id, ContractPhase::Post, &phase.name, None)?
                    {
                        return Ok(flow);
                    }
                }
            }
            let raw = self.store.read_to_string(&response_path(skill))?.unwrap_or_default();
            if spec.acquires_data {
                if let flow @ (Flow::Stop(_) | Flow::Jump(_)) = self.data_records(step, &raw)? {
                    return Ok(flow);
                }
            }
            if let flow @ (Flow::Stop(_) | Flow::Jump(_)) = self.write_outputs(step, doc, &agent, &raw)? {
                return Ok(flow);
            }
        }

        if let (Some(binding), Start::Phase(_) | Start::Review) = (&spec.review, &start) {
            let loop_spec = LoopSpec {
                skill: skill.to_string(),
                artifact: binding.artifact.clone(),
                generator: binding.generator.clone(),
                chain: binding.chain.clone(),
                policy: self.corpus.config.policy.clone(),
                max_rounds: binding.max_rounds,
                thread_id: skill.to_string(),
                separation_enforced: self.flags.separation_enforced,
                budget: self
                    .corpus
                    .agent(&binding.generator)
                    .map(|a| a.token_budget)
                    .unwrap_or_default(),
                retry_backoff_ms: self.corpus.config.runtime.retry_backoff_ms,
            };
            let attached = self.corpus.definition.gates[&GateKind::ReviewRoundGuidance].stage.admits(step.stage);
            let store = self.store;
            let backend = self.backend;
            let mut observer = GuidanceObserver {
                exec: self,
                stage: step.stage,
                skill: skill.to_string(),
                attached,
                error: None,
            };
            let outcome = run_review_loop(&loop_spec, store, backend, &mut observer);
            if let Some(e) = observer.error.take() {
                return Err(e);
            }
            let report = match outcome {
                Ok(report) => report,
                Err(e) => return self.review_failure(skill, e),
            };
            self.remember_review(&report);
            seg.rounds_used = report.history.len() as u32;
            seg.final_score = report.final_score;
            match report.outcome {
                LoopOutcome::Accepted => {}
                LoopOutcome::Paused { gate_id } => {
                    return Ok(Flow::Stop(Terminal::BlockedAt {
                        gate_id,
                        kind: GateKind::ReviewRoundGuidance,
                    }))
                }
                LoopOutcome::Exhausted => {
                    return self.halt(Failure::QualityBelowThreshold {
                        skill: skill.to_string(),
                        score: report.final_score,
                        gap_report: report.gap_report.map(|v| v.path),
                    })
                }
            }
        }

        if !matches!(start, Start::Finalize) {
            self.store.audit(skill, &self.summary(step, doc))?;
            self.checkpoint(skill, PHASE_FINALIZE, 0, CheckpointStatus::InProgress)?;
        }
        if let Some(id) = doc.phases.last().and_then(|p| p.exit.clone()) {
            let after = self.store.audit_len()?;
            let newest = self.store.audit_entries()?.pop();
            let delta = AuditDelta {
                before: audit0,
                after,
                newest,
            };
            let name = doc.phases.last().map(|p| p.name.clone()).unwrap_or_default();
            if let flow @ (Flow::Stop(_) | Flow::Jump(_)) =
                self.check_contract(step, doc, &id, ContractPhase::Post, &name, Some(&delta))?
            {
                return Ok(flow);
            }
        }
        seg.artifacts = doc.canonical_outputs.iter().map(|p| basename(p)).collect();
        Ok(Flow::Continue)
    }

    fn summary(&self, step: PlannedStep<'_>, doc: &SkillDocument) -> String {
        match &step.spec.review {
            Some(_) => format!(
                "accepted after {} round(s){}, score {}",
                self.review.rounds,
                if self.review.decision.is_empty() { String::new() } else { format!(" ({})", self.review.decision) },
                self.review.last_score.map_or("n/a".to_string(), |s| format!("{s:.2}"))
            ),
            None => format!(
                "completed {} phase(s); outputs {}",
                doc.phases.len(),
                if doc.canonical_outputs.is_empty() { "none".to_string() } else { doc.canonical_outputs.join(", ") }
            ),
        }
    }

    fn remember_review(&mut self, report: &LoopReport) {
        if let Some(last) = report.history.last() {
            self.review.scores = Some(last.scores);
            self.review.decision = last.verdict_label.clone();
            self.review.action_items = last.critiques.iter().map(|c| c.text.clone()).collect();
        }
        self.review.last_score = report.final_score;
        self.review.rounds = report.history.len() as u32;
    }

    fn review_failure(&mut self, skill: &str, e: ReviewError) -> Result<Flow, PipelineError> {
        let failure = match e {
            ReviewError::RoleLockViolation { .. } | ReviewError::ColdReadViolation { .. } => {
                return Err(PipelineError::Review(e))
            }
            ReviewError::ToolUnavailable { attempts } => Failure::ToolUnavailable {
                agent: attempts.join(", "),
                reason: "every reviewer in the fallback chain failed".into(),
                fallback: None,
            },
            ReviewError::ChainExhausted { len } => Failure::ToolUnavailable {
                agent: format!("{len} reviewers"),
                reason: "fallback chain exhausted".into(),
                fallback: None,
            },
            ReviewError::MissingArtifact { path } => Failure::MissingInput {
                producer: self.corpus.graph.producer_of(&path).map(str::to_string).or(Some(skill.to_string())),
                path,
            },
            ReviewError::Backend(ref b) => Failure::from_backend(b, 2),
            ReviewError::Store(ref s) => Failure::from_store(s),
            other => return Err(PipelineError::Review(other)),
        };
        self.halt(failure)
    }

    fn write_outputs(
        &mut self,
        step: PlannedStep<'_>,
        doc: &SkillDocument,
        agent: &str,
        raw: &str,
    ) -> Result<Flow, PipelineError> {
        let runtime = &self.corpus.config.runtime;
        let (limit, chunk) = (runtime.max_write_bytes, runtime.chunk_bytes as usize);
        for path in &doc.canonical_outputs {
            if self.agent_wrote(step, path)? {
                continue;
            }
            if self.flags.hooks_enabled {
                if let Some(failure) = self.gate_write(agent, path)? {
                    return self.halt(failure);
                }
            }
            let mut content = raw.trim_end().to_string();
            content.push('\n');
            let size = content.len() as u64;
            if size > limit {
                self.observe(&Failure::ResourceLimit {
                    what: format!("single write to {path}"),
                    size,
                    limit,
                })?;
                write_chunked(self.store, path, content.as_bytes(), chunk)?;
            } else {
                self.store.write_atomic(path, content.as_bytes())?;
            }
        }
        Ok(Flow::Continue)
    }

    /// Canonical outputs the harness must not overwrite: files the agent
    /// wrote during this skill (newer than the skill's phase checkpoint
    /// chain start) and the data manifest.
    fn agent_wrote(&self, step: PlannedStep<'_>, path: &str) -> Result<bool, PipelineError> {
        if path == crate::provenance::DATA_MANIFEST_FILE && step.spec.acquires_data {
            return Ok(self.store.exists(path));
        }
        let Some(raw_written) = self.store.read_to_string(&written_log(&step.spec.skill))? else {
            return Ok(false);
        };
        Ok(raw_written.lines().any(|l| l == path))
    }

    fn data_access_gates(&mut self, step: PlannedStep<'_>) -> Result<Flow, PipelineError> {
        let threshold = self.corpus.config.gates.size_threshold_bytes;
        for plan in self.corpus.definition.datasets.clone() {
            let access = classify_access(&plan.access);
            let oversized = exceeds_size_gate(plan.size_bytes, threshold);
            if !(access.needs_human_gate || oversized) {
                continue;
            }
            let payload = serde_json::json!({
                "dataset": plan.id,
                "source": plan.source_name,
                "url": plan.url,
                "access_class": access.class,
                "credential_required": access.credential_required,
                "size_bytes": plan.size_bytes,
                "size_threshold_bytes": threshold,
            });
            match self.gate(GateKind::DataAccessAuthorization, step.stage, &plan.id, payload, false)? {
                GateState::Passed(_) => {}
                GateState::Pending(g) => {
                    return Ok(Flow::Stop(Terminal::BlockedAt {
                        gate_id: g.id,
                        kind: GateKind::DataAccessAuthorization,
                    }))
                }
                GateState::Rejected(g) => {
                    return Ok(Flow::Stop(Terminal::Halted(HaltCause::GateRejected {
                        gate_id: g.id,
                        kind: GateKind::DataAccessAuthorization,
                    })))
                }
            }
        }
        Ok(Flow::Continue)
    }

    /// After the data step's phases: validate and record every planned
    /// dataset. A missing file needs an approved synthetic-data gate when
    /// the agent proposes a substitute, and halts otherwise.
    fn data_records(&mut self, step: PlannedStep<'_>, raw: &str) -> Result<Flow, PipelineError> {
        let proposals: BTreeSet<String> = raw
            .lines()
            .filter_map(|l| l.trim().strip_prefix(SYNTHETIC_PROPOSAL))
            .flat_map(|ids| ids.split(',').map(|s| s.trim().to_string()))
            .filter(|s| !s.is_empty())
            .collect();
        let enforced = self.flags.manifest_enforced;
        let today = self.store.clock().now().date_naive();
        for plan in self.corpus.definition.datasets.clone() {
            let present = self.store.exists(&plan.path);
            let mut notes = Vec::new();
            if !present {
                if proposals.contains(&plan.id) {
                    let payload = serde_json::json!({
                        "dataset": plan.id,
                        "path": plan.path,
                        "proposal": raw.lines().filter(|l| l.contains(SYNTHETIC_PROPOSAL)).collect::<Vec<_>>(),
                    });
                    let kind = GateKind::SyntheticDataApproval;
                    match self.gate(kind, step.stage, &plan.id, payload, false)? {
                        GateState::Passed(g) => notes.push(format!("synthetic substitute approved in {}", g.id)),
                        GateState::Pending(g) => return Ok(Flow::Stop(Terminal::BlockedAt { gate_id: g.id, kind })),
                        GateState::Rejected(g) => {
                            return Ok(Flow::Stop(Terminal::Halted(HaltCause::GateRejected { gate_id: g.id, kind })))
                        }
                    }
                } else if enforced {
                    return self.halt(Failure::MissingInput {
                        path: plan.path.clone(),
                        producer: Some(step.spec.skill.clone()),
                    });
                } else {
                    continue;
                }
            }
            if !enforced {
                continue;
            }
            let ranked = rank_sources(&plan.candidates, &EQUAL_CRITERIA_WEIGHTS)?;
            let (source, tier) = match ranked.first() {
                Some(best) => {
                    notes.push(format!("ranked first of {} candidate source(s)", ranked.len()));
                    (best.name.clone(), best.tier)
                }
                None => (plan.source_name.clone(), plan.tier),
            };
            let access = classify_access(&plan.access);
            if let Some(g) = latest_gate(self.store, GateKind::DataAccessAuthorization, &plan.id)? {
                if let Some(note) = g.decision.and_then(|d| d.note) {
                    notes.push(format!("access: {note}"));
                }
            }
            let mut record = DatasetRecord::new(&plan.id, &source, &plan.url, tier, access.class, today);
            record.license = plan.license.clone();
            record.variables = plan.variables.clone();
            record.size_bytes = plan.size_bytes;
            if present {
                let outcome = validate_dataset(&self.store.resolve(&plan.path)?, &plan.expected)?;
                record.record_validation(&outcome);
                if !outcome.passed {
                    let failed: Vec<_> = outcome.checks.iter().filter(|c| !c.passed).collect();
                    let subject = format!("{}:validate:{}", step.spec.skill, plan.id);
                    let payload = serde_json::json!({ "dataset": plan.id, "failed_checks": failed });
                    if let flow @ (Flow::Stop(_) | Flow::Jump(_)) = self.blocked_state(step.stage, &subject, payload)? {
                        return Ok(flow);
                    }
                    notes.push("validation failure accepted at a blocked-state gate".into());
                }
            }
            record.notes = notes.join("; ");
            upsert_record(self.store, record)?;
        }
        Ok(Flow::Continue)
    }
}

/// Store-relative paths an agent wrote during a skill, one per line.
fn written_log(skill: &str) -> String {
    format!("{RESPONSES_DIR}/{skill}.files")
}

struct Segment {
    skill: String,
    t0: chrono::DateTime<chrono::Utc>,
    usage0: TokenUsage,
    calls0: u64,
    rounds_used: u32,
    rounds_max: u32,
    final_score: Option<f64>,
    artifacts: Vec<String>,
}

fn notify(hook: &str, message: &str) {
    let payload = serde_json::json!({ "message": message }).to_string();
    let spawned = std::process::Command::new(hook)
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .spawn();
    match spawned {
        Ok(mut child) => {
            if let Some(mut stdin) = child.stdin.take() {
                let _ = stdin.write_all(payload.as_bytes());
            }
            let _ = child.wait();
        }
        Err(e) => tracing::warn!(hook, error = %e, "notify hook failed to start"),
    }
}

/// Raises review-round guidance gates in the stage they are attached to;
/// elsewhere the loop proceeds on its own.
struct GuidanceObserver<'e, 'a> {
    exec: &'e mut Exec<'a>,
    stage: StageId,
    skill: String,
    attached: bool,
    error: Option<PipelineError>,
}

impl ReviewObserver for GuidanceObserver<'_, '_> {
    fn round_completed(&mut self, round: &ReviewRound, decision: &Decision, tier: Tier) {
        let data = serde_json::json!({
            "skill": self.skill,
            "thread": round.thread_id,
            "round": round.round_no,
            "scores": round.scores,
            "weighted": decision.weighted,
            "accepted": decision.accepted,
            "tier": tier,
            "verdict": round.verdict_label,
            "reviewer": round.reviewer,
            "reviewer_quality": round.reviewer_quality,
        });
        if let Err(e) = self.exec.store.emit_event("review_round", data) {
            self.error.get_or_insert(e.into());
        }
    }

    fn guidance(&mut self, round: &ReviewRound, decision: &Decision, tier: Tier) -> Guidance {
        if !self.attached {
            return Guidance::Proceed { note: None };
        }
        let subject = format!("{}#round-{}", round.thread_id, round.round_no);
        let payload = serde_json::json!({
            "skill": self.skill,
            "round": round.round_no,
            "scores": round.scores,
            "weighted": decision.weighted,
            "tier": tier,
            "floor_failures": decision.floor_failures,
            "verdict": round.verdict_label,
            "critiques": round.critiques,
        });
        match self
            .exec
            .gate(GateKind::ReviewRoundGuidance, self.stage, &subject, payload, false)
        {
            Ok(GateState::Passed(g) | GateState::Rejected(g)) => Guidance::Proceed {
                note: g.decision.and_then(|d| d.note),
            },
            Ok(GateState::Pending(g)) => Guidance::Pause { gate_id: g.id },
            Err(e) => {
                self.error = Some(e);
                Guidance::Pause { gate_id: String::new() }
            }
        }
    }

    fn degraded(&mut self, from: &Reviewer, to: &Reviewer) {
        let failure = Failure::ToolUnavailable {
            agent: from.id.clone(),
            reason: "reviewer returned no usable score".into(),
            fallback: Some(format!("{} ({})", to.id, to.quality)),
        };
        if let Err(e) = self.exec.observe(&failure) {
            self.error.get_or_insert(e);
        }
    }
}

/// Confidence tier of a loop's final score under `policy`.
pub fn final_tier(report: &LoopReport, policy: &crate::review::AcceptancePolicy) -> Option<Tier> {
    report.final_score.map(|s| confidence_gate(s, policy.threshold))
}
