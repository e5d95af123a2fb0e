//! Scored generator/evaluator review loops.
//!
//! A generator revises an artifact, a separate evaluator scores it on five
//! dimensions from a cold-read payload, and [`decide`] applies the
//! weighted-threshold-plus-floors rule. Loops are bounded by `max_rounds`,
//! evaluators fall back along a quality-annotated chain, and an exhausted
//! loop leaves a versioned gap report.

mod chain;
mod cold_read;
mod ensemble;
mod memory;
mod round;
mod run;
mod score;

use thiserror::Error;

use crate::backend::BackendError;
use crate::store::StoreError;

pub use chain::{next_reviewer, FallbackChain, Reviewer};
pub use cold_read::{build_payload, scan_payload, ColdReadScan};
pub use ensemble::{aggregate_ensemble, Conflict, EnsembleResult, DEFAULT_CONFLICT_DELTA};
pub use memory::{MemoryEntry, ReviewerMemory};
pub use round::{parse_reviewer_output, Critique, ReviewRound, ReviewerOutput};
pub use run::{
    gap_dimensions, gap_report_path, run_review_loop, AutoProceed, Guidance, LoopOutcome, LoopReport, LoopSpec,
    ReviewObserver, MAX_ROUNDS_ADVERSARIAL, MAX_ROUNDS_REFINE,
};
pub(crate) use score::exact;
pub use score::{
    confidence_gate, decide, AcceptancePolicy, Decision, Dimension, PolicyError, ScoreError, ScoreVector, Tier,
    DEFAULT_FLOOR, DEFAULT_THRESHOLD, MEDIUM_BAND,
};

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("role lock violation: `{agent}` would score its own output")]
    RoleLockViolation { agent: String },
    #[error("cold-read violation: payload carries author context ({})", .markers.join(", "))]
    ColdReadViolation { markers: Vec<String> },
    #[error("fallback chain of {len} reviewers is exhausted")]
    ChainExhausted { len: usize },
    #[error("no reviewer available; tried {}", .attempts.join(", "))]
    ToolUnavailable { attempts: Vec<String> },
    #[error("invalid fallback chain: {0}")]
    InvalidChain(String),
    #[error("ensemble has no rounds")]
    EmptyEnsemble,
    #[error("ensemble rounds have different round numbers")]
    MixedRounds,
    #[error("artifact `{path}` does not exist")]
    MissingArtifact { path: String },
    #[error("max_rounds must be at least 1")]
    InvalidMaxRounds,
    #[error("thread id `{0}` is not a safe file name")]
    InvalidThread(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("generator failed: {0}")]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Store(#[from] StoreError),
}
