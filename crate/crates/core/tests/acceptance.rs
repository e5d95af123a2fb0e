//! Acceptance run: one PASS/FAIL line per criterion. Oracles here are
//! deliberately naive (closures, integer arithmetic, full enumeration) and
//! share no code with the library.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration as StdDuration, Instant};

use chrono::{Duration, NaiveDate, TimeZone, Utc};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use common::faults::fault_scenario;
use common::{corpus_dir, plan_skills, script_with, Rig};
use harness_core::backend::{format_score_signature, MockBackend};
use harness_core::clock::ManualClock;
use harness_core::document::{lint_skill_text, parse_dependency_manifest, ManifestEntry, DependencyManifest, SKILL_SECTIONS};
use harness_core::graph::{build_graph, GraphError};
use harness_core::hooks::{audit_tool_log, pre_tool_gate, PolicySet, ToolCall, Verdict};
use harness_core::pipeline::{
    lint_corpus, list_gates, ErrorClass, GateKind, GateVerdict, PipelineError, ScriptedResponder,
    TelemetryRecord, Terminal, TELEMETRY_FIELDS,
};
use harness_core::provenance::{
    parse_manifest, rank_sources, render_manifest, AccessClass, DatasetRecord, DatasetValidation, SourceCandidate,
    EQUAL_CRITERIA_WEIGHTS,
};
use harness_core::review::{
    confidence_gate, decide, run_review_loop, AcceptancePolicy, AutoProceed, Dimension, FallbackChain, LoopOutcome,
    LoopSpec, ReviewError, ScoreVector, Tier,
};
use harness_core::stage::StageId;
use harness_core::store::{CheckpointRecord, CheckpointStatus, HandoffLoad, Store};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(start: Instant, limit: StdDuration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, format!("took {took:?}, limit {limit:?}"))
}

// 1. Lint

/// Drops one section from a skill document. Section 1 is the frontmatter
/// fence; the rest run from their `## ` heading to the next one.
fn without_section(text: &str, number: u8) -> String {
    if number == 1 {
        let rest = text.strip_prefix("---\n").expect("fence");
        let end = rest.find("\n---\n").expect("closing fence");
        return rest[end + 5..].to_string();
    }
    let title = SKILL_SECTIONS[number as usize - 1].title;
    let mut out = String::new();
    let mut skipping = false;
    let mut in_fence = false;
    for line in text.lines() {
        if line.starts_with("```") {
            in_fence = !in_fence;
        }
        if !in_fence && line.starts_with("## ") {
            skipping = line[3..].trim() == title;
        }
        if !skipping {
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

fn lint() -> Outcome {
    let start = Instant::now();
    let dir = corpus_dir();
    let lint = lint_corpus(&dir).map_err(|e| e.to_string())?;
    ensure(lint.error_count() == 0, format!("corpus errors:\n{}", lint.to_lines()))?;
    let skills: Vec<_> = lint.files.iter().filter(|f| f.path.ends_with("SKILL.md")).collect();
    ensure(skills.len() == 21, format!("{} skill documents", skills.len()))?;
    let mut deletions = 0;
    for file in &skills {
        let text = std::fs::read_to_string(dir.join(&file.path)).unwrap();
        let baseline = lint_skill_text(&text).findings;
        for def in &SKILL_SECTIONS {
            let report = lint_skill_text(&without_section(&text, def.number));
            let new: Vec<_> = report.findings.iter().filter(|f| !baseline.contains(f)).collect();
            ensure(
                new.len() == 1 && new[0].section == def.key && new[0].rule == "missing",
                format!("{} without `{}`: {:?}", file.path, def.title, new),
            )?;
            deletions += 1;
        }
    }
    within(start, StdDuration::from_secs(5))?;
    Ok(format!("0 errors over {} skill and {} agent documents; {deletions} deletions each named once", skills.len(), lint.document_count() - skills.len()))
}

// 2. Crash-resume

fn crash_resume() -> Outcome {
    let start = Instant::now();
    let straight = Rig::new();
    straight.run(&mut ScriptedResponder::approve_all(), None).map_err(|e| e.to_string())?;
    let expected = straight.audit_lines();
    let plan = plan_skills(&straight.corpus);
    for stage in &StageId::ALL[..8] {
        let rig = Rig::new();
        match rig.run(&mut ScriptedResponder::approve_all(), Some(*stage)) {
            Err(PipelineError::Killed { .. }) => {}
            other => return Err(format!("kill after {stage}: {other:?}")),
        }
        let done: BTreeSet<String> = rig.store.audit_entries().unwrap().into_iter().map(|e| e.skill).collect();
        let report = rig.resume(&mut ScriptedResponder::approve_all()).map_err(|e| e.to_string())?;
        ensure(report.terminal == Terminal::Completed, format!("{stage}: {:?}", report.terminal))?;
        let rerun: Vec<_> = report.executed.iter().filter(|s| done.contains(*s)).collect();
        ensure(rerun.is_empty(), format!("{stage}: re-ran {rerun:?}"))?;
        let mut lines = rig.audit_lines();
        let markers: Vec<usize> = (0..lines.len()).filter(|i| lines[*i].starts_with("session: ")).collect();
        ensure(markers.len() == 1, format!("{stage}: {} session markers", markers.len()))?;
        lines.remove(markers[0]);
        ensure(lines == expected, format!("{stage}: audit differs from straight run"))?;
        let skills: Vec<String> = rig.store.audit_entries().unwrap().into_iter().map(|e| e.skill).filter(|s| s != "session" && s != "human-gate").collect();
        ensure(skills == plan, format!("{stage}: skill sequence differs"))?;
    }
    within(start, StdDuration::from_secs(60))?;
    Ok(format!("8 kill points, 0 re-runs, audit equal modulo one marker in {:?}", start.elapsed()))
}

// 3. Hook corpus

fn hook_corpus() -> Outcome {
    let rig = Rig::new();
    let store = &rig.store;
    let policy = PolicySet::for_store(store.root()).with_agents(rig.corpus.agents.values());
    let bash = |agent: &str, argv: &[&str]| ToolCall::new(agent, "Bash").argv(argv);
    let write = |agent: &str, path: &str| ToolCall::new(agent, "Write").target(path);
    let cases: Vec<(ToolCall, Verdict, &str)> = vec![
        (bash("orchestrator", &["rm", "-rf", "/"]), Verdict::Block, "destructive_command"),
        (bash("geo-specialist", &["rm", "-r", "-f", "output"]), Verdict::Block, "destructive_command"),
        (bash("data-engineer", &["bash", "-c", "cd data && rm -fR raw"]), Verdict::Block, "destructive_command"),
        (bash("orchestrator", &["git", "push", "--force", "origin", "main"]), Verdict::Block, "destructive_command"),
        (bash("figure-designer", &["sudo", "/bin/rm", "--recursive", "--force", "/tmp/x"]), Verdict::Block, "destructive_command"),
        (write("paper-writer", "handoff.json"), Verdict::Block, "protected_path"),
        (write("paper-writer", "output/PROJ_NOTES.md"), Verdict::Block, "protected_path"),
        (write("research-scout", "output/../gates.json"), Verdict::Block, "protected_path"),
        (write("data-engineer", "/etc/passwd"), Verdict::Block, "protected_path"),
        (write("geo-specialist", "checkpoints/spatial-analysis.json"), Verdict::Block, "protected_path"),
        (ToolCall::new("peer-reviewer", "Bash").argv(&["ls"]), Verdict::Block, "allowlist"),
        (ToolCall::new("paper-writer", "WebSearch"), Verdict::Block, "allowlist"),
        (ToolCall::new("local-reviewer", "Edit").target("output/AUTO_REVIEW.md"), Verdict::Block, "allowlist"),
        (ToolCall::new("compliance-auditor", "WebFetch"), Verdict::Block, "allowlist"),
        (ToolCall::new("research-scout", "Bash").argv(&["curl", "example.org"]), Verdict::Block, "allowlist"),
        (write("paper-writer", "output/manuscript/DRAFT.md"), Verdict::Allow, "default_allow"),
        (ToolCall::new("peer-reviewer", "Read").target("output/AUTO_REVIEW.md"), Verdict::Allow, "default_allow"),
        (ToolCall::new("research-scout", "WebSearch"), Verdict::Allow, "default_allow"),
        (bash("geo-specialist", &["python", "analysis.py", "--out", "output/spatial-analysis"]), Verdict::Allow, "default_allow"),
        (bash("orchestrator", &["git", "push", "origin", "main"]), Verdict::Allow, "default_allow"),
    ];
    let mut blocked = 0;
    for (i, (call, verdict, rule)) in cases.iter().enumerate() {
        let d = pre_tool_gate(call, &policy, store).map_err(|e| e.to_string())?;
        ensure(d.verdict == *verdict && d.rule == *rule, format!("call {}: {:?} {} expected {verdict:?} {rule}", i + 1, d.verdict, d.rule))?;
        ensure(d.log_ref == i + 1, format!("call {} logged at {}", i + 1, d.log_ref))?;
        blocked += usize::from(d.verdict == Verdict::Block);
    }
    let log = audit_tool_log(store, 0..100).map_err(|e| e.to_string())?;
    ensure(log.len() == 20, format!("{} tool-log entries", log.len()))?;
    ensure(
        log.iter().zip(&cases).all(|(e, (c, v, r))| e.agent == c.agent && e.tool == c.tool && e.verdict == *v && e.rule == *r),
        "tool log disagrees with decisions",
    )?;
    Ok(format!("{blocked} block / {} allow, 20 log entries", 20 - blocked))
}

// 4. Review bounds

fn review_spec(max_rounds: u32, policy: AcceptancePolicy, thread: &str) -> LoopSpec {
    LoopSpec {
        skill: "auto-review-loop".into(),
        artifact: "output/AUTO_REVIEW.md".into(),
        generator: "paper-writer".into(),
        chain: FallbackChain::single("peer-reviewer"),
        policy,
        max_rounds,
        thread_id: thread.into(),
        separation_enforced: true,
        budget: Default::default(),
        retry_backoff_ms: 0,
    }
}

fn fixture_policy() -> AcceptancePolicy {
    AcceptancePolicy::with_uniform_floor(6.0, 5.0).unwrap()
}

/// Integer oracle over tenths: accept iff Σ 2·sᵢ > 10·T and sᵢ ≥ F.
fn accepts_uniform_weights(tenths: [i64; 5], threshold_tenths: i64, floor_tenths: i64) -> bool {
    tenths.iter().sum::<i64>() * 2 > threshold_tenths * 10 && tenths.iter().all(|t| *t >= floor_tenths)
}

fn review_bounds() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5eed_0004);
    let mut exhausted = 0;
    for case in 0..200 {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        store.write_atomic("output/AUTO_REVIEW.md", b"# Draft\n").unwrap();
        let max_rounds = rng.gen_range(1..=6u32);
        let len = rng.gen_range(1..=8usize);
        let seq: Vec<[i64; 5]> = (0..len).map(|_| [(); 5].map(|_| rng.gen_range(30..=90i64))).collect();
        let mut script = String::from(">>> paper-writer\n# Revised\n");
        for t in &seq {
            let v = ScoreVector::from_array(t.map(|x| x as f64 / 10.0));
            script.push_str(&format!(">>> peer-reviewer\n{}\n- [R] tighten\n", format_score_signature(&v)));
        }
        let mock = MockBackend::from_text(&script).unwrap();
        let report = run_review_loop(&review_spec(max_rounds, fixture_policy(), "fuzz"), &store, &mock, &mut AutoProceed)
            .map_err(|e| format!("case {case}: {e}"))?;
        ensure(report.history.len() as u32 <= max_rounds, format!("case {case}: {} rounds > {max_rounds}", report.history.len()))?;
        // The last scripted block repeats once the script runs out.
        let round_scores = |r: usize| seq[r.min(len - 1)];
        let first_accept = (0..max_rounds as usize).find(|r| accepts_uniform_weights(round_scores(*r), 60, 50));
        match (first_accept, &report.outcome) {
            (Some(r), LoopOutcome::Accepted) => ensure(report.history.len() == r + 1, format!("case {case}: accepted at {}", report.history.len()))?,
            (None, LoopOutcome::Exhausted) => {
                exhausted += 1;
                ensure(report.history.len() as u32 == max_rounds, format!("case {case}: exhausted early"))?
            }
            (expected, got) => return Err(format!("case {case}: oracle {expected:?}, loop {got:?}")),
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let store = Store::open(dir.path()).unwrap();
    store.write_atomic("output/AUTO_REVIEW.md", b"# Draft\n").unwrap();
    let script = format!(">>> paper-writer\n# Revised\n>>> peer-reviewer\n{}\n", format_score_signature(&ScoreVector::uniform(4.0)));
    let mock = MockBackend::from_text(&script).unwrap();
    let report = run_review_loop(&review_spec(5, fixture_policy(), "four"), &store, &mock, &mut AutoProceed).map_err(|e| e.to_string())?;
    ensure(report.outcome == LoopOutcome::Exhausted, format!("always-4.0: {:?}", report.outcome))?;
    ensure(report.history.len() == 5, format!("always-4.0: {} rounds", report.history.len()))?;
    let gap = store.read_to_string("output/AUTO_REVIEW_GAP_REPORT.md").unwrap().ok_or("no gap report")?;
    for d in Dimension::ALL {
        ensure(gap.contains(&format!("- {d}\n")), format!("gap report omits {d}"))?;
    }
    ensure(report.failed_dimensions.len() == 5, "failed dimensions")?;
    Ok(format!("200 sequences within bounds ({exhausted} exhausted); always-4.0 exhausted at 5 with 5 gaps"))
}

// 5. decide oracle

fn decide_oracle() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5eed_0005);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        // Weights in twentieths summing to 20.
        let mut cuts: Vec<i64> = (0..4).map(|_| rng.gen_range(0..=20)).collect();
        cuts.sort();
        let k = [cuts[0], cuts[1] - cuts[0], cuts[2] - cuts[1], cuts[3] - cuts[2], 20 - cuts[3]];
        let s: [i64; 5] = [(); 5].map(|_| rng.gen_range(0..=100));
        let t = rng.gen_range(1..=100i64);
        let f: [i64; 5] = [(); 5].map(|_| rng.gen_range(0..=100));
        let policy = AcceptancePolicy::new(k.map(|x| x as f64 / 20.0), t as f64 / 10.0, f.map(|x| x as f64 / 10.0))
            .map_err(|e| e.to_string())?;
        let d = decide(&ScoreVector::from_array(s.map(|x| x as f64 / 10.0)), &policy);
        // Σ (kᵢ/20)(sᵢ/10) > t/10  ⇔  Σ kᵢ·sᵢ > 20·t
        let weighted: i64 = k.iter().zip(&s).map(|(a, b)| a * b).sum();
        let oracle = weighted > 20 * t && s.iter().zip(&f).all(|(a, b)| a >= b);
        let floors: BTreeSet<usize> = (0..5).filter(|i| s[*i] < f[*i]).collect();
        let got: BTreeSet<usize> = d.floor_failures.iter().map(|d| d.index()).collect();
        if d.accepted != oracle || floors != got {
            mismatches += 1;
        }
        // Tier over the same weighted value, in two-hundredths.
        let tier = confidence_gate(weighted as f64 / 200.0, t as f64 / 10.0);
        let oracle_tier = if weighted >= 20 * t {
            Tier::High
        } else if weighted >= 20 * (t - 15) {
            Tier::Medium
        } else {
            Tier::Low
        };
        if tier != oracle_tier {
            mismatches += 1;
        }
    }
    ensure(mismatches == 0, format!("{mismatches} mismatches"))?;
    for t10 in 15..=100 {
        let t = t10 as f64 / 10.0;
        let low = (t10 - 15) as f64 / 10.0;
        ensure(confidence_gate(t, t) == Tier::High, format!("{t} at threshold"))?;
        ensure(confidence_gate((t10 - 1) as f64 / 10.0, t) == Tier::Medium, format!("just under {t}"))?;
        ensure(confidence_gate(low, t) == Tier::Medium, format!("{low} at threshold-1.5"))?;
        ensure(confidence_gate((t10 - 16) as f64 / 10.0, t) == Tier::Low, format!("just under {low}"))?;
        let policy = AcceptancePolicy::with_uniform_floor(t, 0.0).unwrap();
        ensure(!decide(&ScoreVector::uniform(t), &policy).accepted, format!("weighted == {t} accepted"))?;
    }
    Ok("10000 tuples, 0 mismatches; tier edges exact for thresholds 1.5..10.0".into())
}

// 6. Case study

fn case_study() -> Outcome {
    let rig = Rig::with_script(&script_with(
        ">>> peer-reviewer\nIdea review notes.\n>>> peer-reviewer\nIdea review: candidate 2 is strongest.\n>>> peer-reviewer\nScore: 8.0 (N:8, R:8, L:8, C:8, I:8)\nVerdict: READY\n>>> peer-reviewer\nScore: 5.0 (N:5, R:5, L:5, C:5, I:5)\nVerdict: ALMOST\n- [R] no baseline comparison\n>>> peer-reviewer\nScore: 6.5 (N:6.5, R:6.5, L:6.5, C:6.5, I:6.5)\nVerdict: READY\n",
    ));
    let policy = &rig.corpus.config.policy;
    ensure(policy.threshold == 6.0 && policy.floors == [5.0; 5], "fixture policy is not 6.0 / 5.0")?;
    let mut responder = ScriptedResponder::approve_all().answer(GateKind::ReviewRoundGuidance, GateVerdict::Approve, Some("add the baseline"));
    let report = rig.run(&mut responder, None).map_err(|e| e.to_string())?;
    ensure(report.terminal == Terminal::Completed, format!("{:?}", report.terminal))?;
    let state: serde_json::Value = rig.store.read_json("review/auto-review-loop.json").unwrap().ok_or("no loop state")?;
    let rounds = state["rounds"].as_array().ok_or("no rounds")?;
    ensure(rounds.len() == 2, format!("{} rounds", rounds.len()))?;
    ensure(rounds[0]["reviewer"] == "peer-reviewer" && rounds[0]["reviewer_quality"] == "HIGH", format!("round 1 reviewer {}", rounds[0]))?;
    ensure(state["finished"] == "accepted", format!("outcome {}", state["finished"]))?;
    let guidance: Vec<_> = list_gates(&rig.store).unwrap().into_iter().filter(|g| g.kind == GateKind::ReviewRoundGuidance).collect();
    ensure(guidance.len() == 1 && guidance[0].subject == "auto-review-loop#round-1", format!("guidance gates {guidance:?}"))?;
    Ok("2 rounds (5.0 then 6.5), round-1 guidance gate, accepted".into())
}

// 7. Checkpoint expiry

fn checkpoint_expiry() -> Outcome {
    let t0 = Utc.with_ymd_and_hms(2025, 3, 1, 12, 0, 0).unwrap();
    let clock = Arc::new(ManualClock::new(t0));
    let dir = tempfile::tempdir().unwrap();
    let store = Store::with_clock(dir.path(), clock.clone()).unwrap();
    let record = CheckpointRecord {
        skill: "refine-research".into(),
        phase: "produce".into(),
        round: 2,
        thread_id: "refine-research".into(),
        scores: None,
        status: CheckpointStatus::InProgress,
        timestamp: t0,
    };
    store.save_checkpoint(&record).map_err(|e| e.to_string())?;
    clock.set(t0 + Duration::hours(23) + Duration::minutes(59));
    ensure(store.load_checkpoint("refine-research").map_err(|e| e.to_string())? == Some(record.clone()), "23h59m not loaded")?;
    clock.set(t0 + Duration::hours(24));
    ensure(store.load_checkpoint("refine-research").map_err(|e| e.to_string())?.is_some(), "exactly 24h dropped")?;
    clock.set(t0 + Duration::hours(24) + Duration::seconds(1));
    ensure(store.load_checkpoint("refine-research").map_err(|e| e.to_string())?.is_none(), "24h00m01s loaded")?;
    let archived = store.archived_checkpoints("refine-research").map_err(|e| e.to_string())?;
    ensure(archived.len() == 1, format!("{} archived", archived.len()))?;
    ensure(store.load_checkpoint("refine-research").map_err(|e| e.to_string())?.is_none(), "stale record still live")?;
    Ok("23h59m loads, 24h00m01s absent and archived".into())
}

// 8. Telemetry

const PAPER_RECORD: &str = r#"{
  "skill": "refine-research",
  "rounds_used": 4,
  "rounds_max": 5,
  "external_llm_calls": 4,
  "total_input_tokens": 128000,
  "total_output_tokens": 24000,
  "wall_clock_minutes": 22,
  "final_score": 9.2,
  "artifacts_produced": ["FINAL_PROPOSAL.md", "REFINE_STATE.json"]
}"#;

fn telemetry() -> Outcome {
    let record = TelemetryRecord::from_json(PAPER_RECORD).map_err(|e| e.to_string())?;
    let json = record.to_json();
    let value: serde_json::Value = serde_json::from_str(&json).unwrap();
    let keys: Vec<&str> = value.as_object().unwrap().keys().map(String::as_str).collect();
    ensure(keys.len() == 9, format!("{} fields", keys.len()))?;
    let expected: BTreeSet<&str> = TELEMETRY_FIELDS.into_iter().collect();
    ensure(keys.iter().copied().collect::<BTreeSet<_>>() == expected, format!("fields {keys:?}"))?;
    ensure(value == serde_json::from_str::<serde_json::Value>(PAPER_RECORD).unwrap(), format!("round trip gave {json}"))?;
    ensure(TelemetryRecord::from_json(&json).map_err(|e| e.to_string())? == record, "second parse differs")?;
    Ok(format!("9 fields, byte-equal values: {json}"))
}

// 9. Taxonomy

const RESPONSES: [(ErrorClass, &str); 6] = [
    (ErrorClass::MissingInput, "Halt with diagnostic; suggest which skill to run first"),
    (ErrorClass::ToolUnavailable, "Fall back to local alternative; log degradation"),
    (ErrorClass::QualityBelowThreshold, "Halt; write partial output with gap report"),
    (ErrorClass::StateCorruption, "Delete checkpoint; restart from Phase 0"),
    (ErrorClass::ResourceLimit, "Chunk output; use Bash heredoc fallback"),
    (ErrorClass::ExternalTimeout, "Retry once with backoff; halt on second failure"),
];

fn taxonomy() -> Outcome {
    for (class, response) in RESPONSES {
        ensure(class.prescribed_response() == response, format!("{class}: `{}`", class.prescribed_response()))?;
        fault_scenario(class).map_err(|e| format!("{class}: {e}"))?;
    }
    Ok("6 classes injected; responses match the table".into())
}

// 10. Graph oracles

fn closure(n: usize, edges: &BTreeSet<(usize, usize)>) -> Vec<Vec<bool>> {
    let mut r = vec![vec![false; n]; n];
    for (a, b) in edges {
        r[*a][*b] = true;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if r[i][k] && r[k][j] {
                    r[i][j] = true;
                }
            }
        }
    }
    r
}

/// Lexicographically least valid order, by exhaustive search for small
/// graphs and by repeated full scans otherwise.
fn least_order(names: &[String], edges: &BTreeSet<(usize, usize)>) -> Vec<String> {
    let n = names.len();
    let mut by_name: Vec<usize> = (0..n).collect();
    by_name.sort_by(|a, b| names[*a].cmp(&names[*b]));
    let valid = |order: &[usize]| {
        let pos: BTreeMap<usize, usize> = order.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        edges.iter().all(|(a, b)| pos[a] < pos[b])
    };
    if n <= 7 {
        let mut best: Option<Vec<String>> = None;
        let mut perm = by_name.clone();
        permutations(&mut perm, 0, &mut |p| {
            if valid(p) {
                let named: Vec<String> = p.iter().map(|i| names[*i].clone()).collect();
                if best.as_ref().is_none_or(|b| named < *b) {
                    best = Some(named);
                }
            }
        });
        return best.unwrap_or_default();
    }
    let mut placed = vec![false; n];
    let mut out = Vec::new();
    for _ in 0..n {
        let next = by_name
            .iter()
            .copied()
            .find(|v| !placed[*v] && edges.iter().all(|(a, b)| *b != *v || placed[*a]))
            .expect("acyclic");
        placed[next] = true;
        out.push(names[next].clone());
    }
    out
}

fn permutations(v: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permutations(v, k + 1, f);
        v.swap(k, i);
    }
}

fn graph_oracles() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5eed_0010);
    let (mut acyclic, mut cyclic) = (0, 0);
    for case in 0..1000 {
        let n = rng.gen_range(1..=12usize);
        let names: Vec<String> = (0..n).map(|i| format!("s{:02}-{}", rng.gen_range(0..100), i)).collect();
        let density = rng.gen_range(0.05..0.4);
        let allow_back = rng.gen_bool(0.3);
        let mut edges = BTreeSet::new();
        for a in 0..n {
            for b in 0..n {
                if a != b && (a < b || allow_back) && rng.gen_bool(density) {
                    edges.insert((a, b));
                }
            }
        }
        let mut entries: BTreeMap<String, ManifestEntry> = names.iter().map(|s| (s.clone(), ManifestEntry::default())).collect();
        for (a, b) in &edges {
            entries.get_mut(&names[*b]).unwrap().requires_before.push(names[*a].clone());
        }
        let manifest = DependencyManifest::from_entries(entries);
        let manifest = parse_dependency_manifest(&manifest.to_yaml()).map_err(|e| e.to_string())?;
        let reach = closure(n, &edges);
        let has_cycle = (0..n).any(|i| reach[i][i]);
        match build_graph(&manifest) {
            Err(GraphError::CycleDetected { witness }) => {
                ensure(has_cycle, format!("case {case}: false cycle {witness:?}"))?;
                let idx = |s: &String| names.iter().position(|x| x == s).unwrap();
                ensure(witness.len() >= 3 && witness.first() == witness.last(), format!("case {case}: witness {witness:?}"))?;
                ensure(witness.windows(2).all(|w| edges.contains(&(idx(&w[0]), idx(&w[1])))), format!("case {case}: witness not a cycle {witness:?}"))?;
                cyclic += 1;
            }
            Err(e) => return Err(format!("case {case}: {e}")),
            Ok(graph) => {
                ensure(!has_cycle, format!("case {case}: cycle missed"))?;
                ensure(graph.topo_order() == least_order(&names, &edges).as_slice(), format!("case {case}: order"))?;
                for (i, name) in names.iter().enumerate() {
                    let impact: BTreeSet<String> = (0..n).filter(|j| reach[i][*j]).map(|j| names[j].clone()).collect();
                    ensure(graph.impact_of(name).unwrap() == impact, format!("case {case}: impact of {name}"))?;
                    let prereq: BTreeSet<String> = (0..n).filter(|j| reach[*j][i]).map(|j| names[j].clone()).collect();
                    ensure(graph.prerequisites_of(name).unwrap() == prereq, format!("case {case}: prerequisites of {name}"))?;
                }
                acyclic += 1;
            }
        }
    }
    Ok(format!("1000 graphs ({acyclic} acyclic, {cyclic} cyclic) agree with brute force"))
}

// 11. Ablations

fn ablations() -> Outcome {
    let script = script_with(">>> paper-writer\nScore: 8.0 (N:8, R:8, L:8, C:8, I:8)\nVerdict: READY\n");
    let self_scoring = |separation: bool| {
        let mut rig = Rig::with_script(&script);
        for stage in &mut rig.corpus.definition.stages {
            for step in &mut stage.steps {
                if let Some(review) = &mut step.review {
                    review.chain = FallbackChain::single("paper-writer");
                }
            }
        }
        let mut flags = rig.corpus.feature_flags();
        flags.separation_enforced = separation;
        rig.corpus.config.feature_flags = Some(flags);
        let result = rig.run(&mut ScriptedResponder::approve_all(), None);
        (rig, result)
    };
    let (_, enforced) = self_scoring(true);
    ensure(
        matches!(enforced, Err(PipelineError::Review(ReviewError::RoleLockViolation { ref agent })) if agent == "paper-writer"),
        format!("default allowed self-scoring: {enforced:?}"),
    )?;
    let (rig, relaxed) = self_scoring(false);
    let relaxed = relaxed.map_err(|e| format!("-GE: {e}"))?;
    ensure(relaxed.terminal == Terminal::Completed, format!("-GE: {:?}", relaxed.terminal))?;
    let state: serde_json::Value = rig.store.read_json("review/refine-research.json").unwrap().ok_or("no loop state")?;
    ensure(state["rounds"][0]["reviewer"] == "paper-writer", "-GE: generator did not score")?;

    let with_hooks = Rig::new();
    let _ = with_hooks.run(&mut ScriptedResponder::approve_all(), Some(StageId::IdeaDiscovery));
    ensure(matches!(with_hooks.store.load_handoff(), Ok(HandoffLoad::Loaded(_))), "default left no handoff")?;
    let mut rig = Rig::new();
    let mut flags = rig.corpus.feature_flags();
    flags.hooks_enabled = false;
    rig.corpus.config.feature_flags = Some(flags);
    match rig.run(&mut ScriptedResponder::approve_all(), Some(StageId::IdeaDiscovery)) {
        Err(PipelineError::Killed { .. }) => {}
        other => return Err(format!("-HH kill: {other:?}")),
    }
    ensure(matches!(rig.store.load_handoff(), Ok(HandoffLoad::Absent)), "-HH left a handoff")?;
    let report = rig.resume(&mut ScriptedResponder::approve_all()).map_err(|e| e.to_string())?;
    ensure(report.resumed_at.as_deref() == Some("launcher"), format!("-HH resumed at {:?}", report.resumed_at))?;
    Ok("-GE self-scores, default refuses with RoleLockViolation; -HH leaves nothing to resume from".into())
}

// 12. Manifest

fn random_record(rng: &mut StdRng, i: usize) -> DatasetRecord {
    let words = ["streamflow", "precip", "soil moisture", "land cover", "DEM"];
    let pick = |rng: &mut StdRng| words[rng.gen_range(0..words.len())].to_string();
    let date = NaiveDate::from_ymd_opt(2020 + rng.gen_range(0..6), rng.gen_range(1..=12), rng.gen_range(1..=28)).unwrap();
    let access = AccessClass::ALL[rng.gen_range(0..7)];
    let mut r = DatasetRecord::new(
        &format!("ds-{i}.{}", rng.gen_range(0..1000)),
        &format!("{} archive | mirror", pick(rng)),
        &format!("https://example.org/{i}?q={}", rng.gen_range(0..99)),
        rng.gen_range(1..=7),
        access,
        date,
    );
    r.license = if rng.gen_bool(0.5) { "CC-BY-4.0".into() } else { String::new() };
    r.variables = (0..rng.gen_range(0..4)).map(|_| pick(rng)).collect();
    r.size_bytes = rng.gen_range(0..10_000_000);
    r.notes = if rng.gen_bool(0.3) { "pipe | inside, and `ticks`".into() } else { String::new() };
    match rng.gen_range(0..3) {
        0 => {}
        n => r.record_validation(&DatasetValidation {
            checks: Vec::new(),
            passed: n == 1,
            size_bytes: r.size_bytes,
            sha256: format!("sha256:{:064x}", rng.gen::<u128>()),
        }),
    }
    r
}

fn manifest() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5eed_0012);
    for case in 0..50 {
        let records: Vec<DatasetRecord> = (0..rng.gen_range(0..8)).map(|i| random_record(&mut rng, i)).collect();
        let text = render_manifest(&records).map_err(|e| format!("case {case}: {e}"))?;
        let back = parse_manifest(&text).map_err(|e| format!("case {case}: {e}\n{text}"))?;
        ensure(back == records, format!("case {case}: round trip differs\n{text}"))?;
    }
    for case in 0..200 {
        let candidates: Vec<SourceCandidate> = (0..rng.gen_range(1..10))
            .map(|i| {
                let scores = [(); 9].map(|_| rng.gen_range(0..=20) as f64 / 2.0);
                SourceCandidate::new(&format!("src-{}", (i * 7 + case) % 11), rng.gen_range(1..=3), scores)
            })
            .collect();
        let ranked = rank_sources(&candidates, &EQUAL_CRITERIA_WEIGHTS).map_err(|e| e.to_string())?;
        // Equal weights: order by tier, then the sum of half-points, then name.
        let half_points = |c: &SourceCandidate| c.criteria_scores.values().map(|v| (v * 2.0) as i64).sum::<i64>();
        let mut oracle = candidates.clone();
        oracle.sort_by(|a, b| {
            a.tier.cmp(&b.tier).then(half_points(b).cmp(&half_points(a))).then(a.name.cmp(&b.name))
        });
        let names = |v: &[SourceCandidate]| v.iter().map(|c| (c.name.clone(), c.tier, half_points(c))).collect::<Vec<_>>();
        ensure(names(&ranked) == names(&oracle), format!("rank case {case}"))?;
    }
    Ok("50 manifests round-trip; 200 rankings match the sort oracle".into())
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 12] = [
        ("lint", lint),
        ("crash-resume", crash_resume),
        ("hook corpus", hook_corpus),
        ("review bounds", review_bounds),
        ("decide oracle", decide_oracle),
        ("case study", case_study),
        ("checkpoint expiry", checkpoint_expiry),
        ("telemetry", telemetry),
        ("taxonomy", taxonomy),
        ("graph oracles", graph_oracles),
        ("ablations", ablations),
        ("manifest", manifest),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of 12 criteria pass", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
