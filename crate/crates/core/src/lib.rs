//! Orchestration harness for long-running, multi-stage research pipelines.
//!
//! The crate is organised around the pieces a pipeline run touches:
//!
//! - [`document`]: parsing and linting of skill/agent Markdown documents and
//!   the dependency manifest.
//! - [`graph`]: the skill dependency DAG (ordering, impact, dispatch checks).
//! - [`contract`]: phase pre/postcondition evaluation.
//! - [`store`]: durable handoff, checkpoints, audit log and artifact versions.
//! - [`hooks`]: the pre-tool-use policy gate and the stop-hook state flush.
//! - [`review`]: scored generator/evaluator review loops.
//! - [`backend`]: the agent invocation boundary (mock and remote).
//! - [`provenance`]: dataset manifest, access classes and source ranking.
//! - [`pipeline`]: the nine-stage orchestrator, gates, taxonomy and telemetry.

pub mod backend;
pub mod clock;
pub mod contract;
pub mod document;
pub mod graph;
pub mod hooks;
pub mod pipeline;
pub mod provenance;
pub mod review;
pub mod stage;
pub mod store;
