//! The bounded review loop.
//!
//! Loop state is persisted under `review/<thread_id>.json` after every round,
//! so a loop paused on a human gate (or interrupted) continues from the next
//! round instead of starting over.

use std::collections::BTreeSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    build_payload, confidence_gate, decide, next_reviewer, parse_reviewer_output, scan_payload, AcceptancePolicy,
    Decision, Dimension, FallbackChain, ReviewError, ReviewRound, Reviewer, ReviewerMemory, Tier,
};
use crate::backend::{invoke_checked, invoke_with_retry, AgentBackend, AgentInvocation, TokenUsage};
use crate::document::TokenBudget;
use crate::store::{ArtifactVersion, CheckpointRecord, CheckpointStatus, Store};

/// Bound for refine-style loops.
pub const MAX_ROUNDS_REFINE: u32 = 5;
/// Bound for the adversarial review stage.
pub const MAX_ROUNDS_ADVERSARIAL: u32 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopSpec {
    /// Skill that owns the loop; keys the checkpoint.
    pub skill: String,
    /// Canonical store path of the artifact under review.
    pub artifact: String,
    pub generator: String,
    pub chain: FallbackChain,
    pub policy: AcceptancePolicy,
    pub max_rounds: u32,
    pub thread_id: String,
    /// When false the generator may appear in the evaluator chain.
    pub separation_enforced: bool,
    pub budget: TokenBudget,
    #[serde(default)]
    pub retry_backoff_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Guidance {
    Proceed { note: Option<String> },
    /// A human gate is pending; the loop stops and reports `Paused`.
    Pause { gate_id: String },
}

pub trait ReviewObserver {
    fn round_completed(&mut self, _round: &ReviewRound, _decision: &Decision, _tier: Tier) {}

    /// Called after each non-accepting round that leaves rounds to spare.
    fn guidance(&mut self, round: &ReviewRound, decision: &Decision, tier: Tier) -> Guidance;

    fn degraded(&mut self, _from: &Reviewer, _to: &Reviewer) {}
}

/// Never pauses.
#[derive(Debug, Default, Clone, Copy)]
pub struct AutoProceed;

impl ReviewObserver for AutoProceed {
    fn guidance(&mut self, _: &ReviewRound, _: &Decision, _: Tier) -> Guidance {
        Guidance::Proceed { note: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopOutcome {
    Accepted,
    Exhausted,
    Paused { gate_id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopReport {
    pub outcome: LoopOutcome,
    pub history: Vec<ReviewRound>,
    pub gap_report: Option<ArtifactVersion>,
    pub failed_dimensions: BTreeSet<Dimension>,
    pub final_score: Option<f64>,
    pub usage: TokenUsage,
    pub calls: u64,
    /// Reviewers whose quality was LOW contributed to the outcome.
    pub low_quality: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct LoopState {
    rounds: Vec<ReviewRound>,
    failures: usize,
    extra_round_done: bool,
    awaiting_guidance: bool,
    note: Option<String>,
    usage: TokenUsage,
    calls: u64,
    finished: Option<LoopOutcome>,
    gap_report: Option<ArtifactVersion>,
}

fn state_path(thread_id: &str) -> String {
    format!("review/{thread_id}.json")
}

/// `output/AUTO_REVIEW.md` → `output/AUTO_REVIEW_GAP_REPORT.md`
pub fn gap_report_path(artifact: &str) -> String {
    let file_start = artifact.rfind('/').map_or(0, |i| i + 1);
    let base = match artifact[file_start..].rfind('.') {
        Some(dot) if dot > 0 => &artifact[..file_start + dot],
        _ => artifact,
    };
    format!("{base}_GAP_REPORT.md")
}

/// Dimensions under their floor or not above the threshold.
pub fn gap_dimensions(round: &ReviewRound, policy: &AcceptancePolicy) -> BTreeSet<Dimension> {
    Dimension::ALL
        .into_iter()
        .filter(|d| {
            let s = round.scores.get(*d);
            s < policy.floors[d.index()] || s <= policy.threshold
        })
        .collect()
}

fn render_gap_report(spec: &LoopSpec, last: &ReviewRound, decision: &Decision, failed: &BTreeSet<Dimension>) -> String {
    let mut out = format!(
        "# Gap report: {}\n\nOutcome: exhausted after {} rounds (max {})\nWeighted score: {} (threshold {})\n\n| Dimension | Score | Floor |\n|---|---|---|\n",
        spec.artifact, last.round_no, spec.max_rounds, decision.weighted, spec.policy.threshold
    );
    for d in Dimension::ALL {
        out.push_str(&format!("| {d} | {} | {} |\n", last.scores.get(d), spec.policy.floors[d.index()]));
    }
    out.push_str("\n## Failed dimensions\n\n");
    for d in failed {
        out.push_str(&format!("- {d}\n"));
    }
    if !last.critiques.is_empty() {
        out.push_str("\n## Open critiques\n\n");
        for c in &last.critiques {
            out.push_str(&format!("- [{}] {}\n", c.dimension.letter(), c.text));
        }
    }
    out
}

fn revision_payload(artifact: &str, content: &str, last: &ReviewRound, note: Option<&str>) -> String {
    let mut out = format!("## Revise {artifact}\n\n{}\n\n## Critiques from round {}\n\n", content.trim_end(), last.round_no);
    for c in &last.critiques {
        out.push_str(&format!("- [{}] {}\n", c.dimension.letter(), c.text));
    }
    if let Some(note) = note {
        out.push_str(&format!("\n## Human guidance\n\n{note}\n"));
    }
    out
}

struct Runner<'a> {
    spec: &'a LoopSpec,
    store: &'a Store,
    backend: &'a dyn AgentBackend,
    observer: &'a mut dyn ReviewObserver,
    state: LoopState,
}

impl Runner<'_> {
    fn save(&self) -> Result<(), ReviewError> {
        self.store.write_json(&state_path(&self.spec.thread_id), &self.state)?;
        Ok(())
    }

    fn checkpoint(&self, round: &ReviewRound, status: CheckpointStatus) -> Result<(), ReviewError> {
        self.store.save_checkpoint(&CheckpointRecord {
            skill: self.spec.skill.clone(),
            phase: "review".into(),
            round: round.round_no,
            thread_id: self.spec.thread_id.clone(),
            scores: Some(round.scores),
            status,
            timestamp: self.store.clock().now(),
        })?;
        Ok(())
    }

    fn report(&self, gap_report: Option<ArtifactVersion>) -> LoopReport {
        let last = self.state.rounds.last();
        LoopReport {
            outcome: self.state.finished.clone().unwrap_or(LoopOutcome::Exhausted),
            history: self.state.rounds.clone(),
            failed_dimensions: match (&gap_report, last) {
                (Some(_), Some(r)) => gap_dimensions(r, &self.spec.policy),
                _ => BTreeSet::new(),
            },
            gap_report,
            final_score: last.map(|r| decide(&r.scores, &self.spec.policy).weighted),
            usage: self.state.usage,
            calls: self.state.calls,
            low_quality: self.state.rounds.iter().any(|r| r.reviewer_quality == Tier::Low),
        }
    }

    fn revise(&mut self) -> Result<(), ReviewError> {
        let last = self.state.rounds.last().expect("revision follows a round").clone();
        let content = self.store.read_to_string(&self.spec.artifact)?.unwrap_or_default();
        let payload = revision_payload(&self.spec.artifact, &content, &last, self.state.note.as_deref());
        let invocation = AgentInvocation::new(&self.spec.generator, payload, &self.spec.thread_id).with_budget(self.spec.budget);
        let out = invoke_with_retry(self.backend, &invocation, Duration::from_millis(self.spec.retry_backoff_ms))?;
        self.state.usage += out.result.tokens;
        self.state.calls += 1;
        self.state.note = None;
        let mut revised = out.result.raw;
        if !revised.ends_with('\n') {
            revised.push('\n');
        }
        self.store.version_artifact(&self.spec.artifact, revised.as_bytes())?;
        Ok(())
    }

    fn evaluate(&mut self, round_no: u32, memory: &mut ReviewerMemory) -> Result<ReviewRound, ReviewError> {
        let content = self.store.read_to_string(&self.spec.artifact)?.unwrap_or_default();
        let payload = build_payload(&content, memory.thread(&self.spec.thread_id));
        let scan = scan_payload(&payload);
        if scan.author_context_present {
            return Err(ReviewError::ColdReadViolation { markers: scan.markers });
        }
        let mut attempts = Vec::new();
        loop {
            let reviewer = match next_reviewer(&self.spec.chain, self.state.failures) {
                Ok(r) => r.clone(),
                Err(_) => return Err(ReviewError::ToolUnavailable { attempts }),
            };
            let invocation = AgentInvocation::new(&reviewer.id, payload.clone(), &self.spec.thread_id).with_budget(self.spec.budget);
            let parsed = invoke_checked(self.backend, &invocation).map(|result| {
                self.state.usage += result.tokens;
                self.state.calls += 1;
                parse_reviewer_output(&result.raw)
            });
            if let Ok(out) = &parsed {
                if let Some(scores) = out.scores.filter(|s| s.validate().is_ok()) {
                    let round = ReviewRound {
                        round_no,
                        thread_id: self.spec.thread_id.clone(),
                        scores,
                        critiques: out.critiques.clone(),
                        verdict_label: out.verdict_label.clone(),
                        reviewer: reviewer.id.clone(),
                        reviewer_quality: reviewer.quality,
                    };
                    memory.append(&self.spec.thread_id, round_no, &round.critiques);
                    memory.save(self.store)?;
                    return Ok(round);
                }
            }
            attempts.push(reviewer.id.clone());
            self.state.failures += 1;
            if let Ok(next) = next_reviewer(&self.spec.chain, self.state.failures) {
                self.observer.degraded(&reviewer, next);
                if next.quality != reviewer.quality {
                    self.store.audit(
                        &self.spec.skill,
                        &format!(
                            "reviewer degraded from {} ({}) to {} ({})",
                            reviewer.id, reviewer.quality, next.id, next.quality
                        ),
                    )?;
                }
            }
        }
    }

    fn exhaust(&mut self) -> Result<LoopReport, ReviewError> {
        let last = self.state.rounds.last().expect("exhausted after a round").clone();
        let decision = decide(&last.scores, &self.spec.policy);
        let failed = gap_dimensions(&last, &self.spec.policy);
        let text = render_gap_report(self.spec, &last, &decision, &failed);
        let version = self.store.version_artifact(&gap_report_path(&self.spec.artifact), text.as_bytes())?;
        self.checkpoint(&last, CheckpointStatus::Blocked)?;
        self.state.finished = Some(LoopOutcome::Exhausted);
        self.state.gap_report = Some(version.clone());
        self.save()?;
        Ok(self.report(Some(version)))
    }

    fn run(&mut self) -> Result<LoopReport, ReviewError> {
        if let Some(finished) = &self.state.finished {
            if !matches!(finished, LoopOutcome::Paused { .. }) {
                return Ok(self.report(self.state.gap_report.clone()));
            }
        }
        let mut memory = ReviewerMemory::load(self.store)?;
        loop {
            if self.state.awaiting_guidance {
                let last = self.state.rounds.last().expect("guidance follows a round").clone();
                let decision = decide(&last.scores, &self.spec.policy);
                let tier = confidence_gate(decision.weighted, self.spec.policy.threshold);
                match self.observer.guidance(&last, &decision, tier) {
                    Guidance::Pause { gate_id } => {
                        self.state.finished = Some(LoopOutcome::Paused { gate_id });
                        self.save()?;
                        return Ok(self.report(None));
                    }
                    Guidance::Proceed { note } => {
                        self.state.awaiting_guidance = false;
                        self.state.finished = None;
                        self.state.note = note;
                    }
                }
            }

            let round_no = self.state.rounds.len() as u32 + 1;
            if round_no > self.spec.max_rounds {
                return self.exhaust();
            }
            if round_no > 1 {
                self.revise()?;
            }
            let round = self.evaluate(round_no, &mut memory)?;
            self.state.rounds.push(round.clone());
            self.save()?;
            self.checkpoint(&round, CheckpointStatus::InProgress)?;

            let decision = decide(&round.scores, &self.spec.policy);
            let tier = confidence_gate(decision.weighted, self.spec.policy.threshold);
            self.observer.round_completed(&round, &decision, tier);

            if decision.accepted {
                if round.reviewer_quality == Tier::Medium && !self.state.extra_round_done {
                    self.state.extra_round_done = true;
                    self.save()?;
                    continue;
                }
                self.checkpoint(&round, CheckpointStatus::Completed)?;
                self.state.finished = Some(LoopOutcome::Accepted);
                self.save()?;
                return Ok(self.report(None));
            }
            if round_no >= self.spec.max_rounds {
                return self.exhaust();
            }
            self.state.awaiting_guidance = true;
            self.save()?;
        }
    }
}

/// Runs (or continues) the loop for `spec.thread_id`.
///
/// Round 1 scores the artifact as it stands; each later round first has the
/// generator revise it into a new version. The evaluator only ever sees
/// [`build_payload`] output.
pub fn run_review_loop(
    spec: &LoopSpec,
    store: &Store,
    backend: &dyn AgentBackend,
    observer: &mut dyn ReviewObserver,
) -> Result<LoopReport, ReviewError> {
    spec.policy.validate()?;
    if spec.max_rounds == 0 {
        return Err(ReviewError::InvalidMaxRounds);
    }
    if spec.separation_enforced && spec.chain.contains(&spec.generator) {
        return Err(ReviewError::RoleLockViolation {
            agent: spec.generator.clone(),
        });
    }
    if !crate::document::skill::is_safe_relative_path(&state_path(&spec.thread_id)) || spec.thread_id.contains('/') {
        return Err(ReviewError::InvalidThread(spec.thread_id.clone()));
    }
    let Some(content) = store.read(&spec.artifact)? else {
        return Err(ReviewError::MissingArtifact {
            path: spec.artifact.clone(),
        });
    };
    let state: LoopState = match store.read_json(&state_path(&spec.thread_id)) {
        Ok(state) => state.unwrap_or_default(),
        Err(_) => {
            store.delete_checkpoint(&spec.skill)?;
            LoopState::default()
        }
    };
    if state.rounds.is_empty() && store.latest_version(&spec.artifact)?.is_none() {
        store.version_artifact(&spec.artifact, &content)?;
    }
    Runner {
        spec,
        store,
        backend,
        observer,
        state,
    }
    .run()
}
