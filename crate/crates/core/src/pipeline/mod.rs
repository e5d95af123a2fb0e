//! The nine-stage orchestrator: pipeline definition, human gates, the
//! error taxonomy, telemetry, configuration and the runner.

use thiserror::Error;

pub mod config;
pub mod corpus;
pub mod definition;
pub mod gates;
pub mod runner;
pub mod taxonomy;
pub mod telemetry;

pub use config::{BackendConfig, GateConfig, HarnessConfig, RuntimeConfig, CONFIG_FILE};
pub use corpus::{lint_corpus, lint_path, Corpus, CorpusLint, FileLint, DEFINITION_FILE, GRAPH_FILE};
pub use definition::{
    FeatureFlags, GateAttachment, GateKind, PipelineDefinition, PlannedStep, RejectRoute, ReviewBinding, StageBinding,
    StageRef, StepSpec,
};
pub use gates::{
    get_gate, latest_gate, list_gates, mark_looped, raise_gate, resolve_gate, route_for, GateDecision, GateError,
    GateRoute, GateVerdict, HumanGate,
};
pub use runner::{
    preflight, resume, run_pipeline, write_chunked, GateAnswer, GateResponder, HaltCause, LeavePending, RunEnv,
    RunOptions, RunReport, ScriptedResponder, Terminal,
};
pub use taxonomy::{classify_error, Classified, ErrorClass, Failure};
pub use telemetry::{emit_telemetry, read_telemetry, TelemetryError, TelemetryRecord, TELEMETRY_FIELDS};

use crate::contract::ContractError;
use crate::provenance::ProvenanceError;
use crate::review::ReviewError;
use crate::stage::StageId;
use crate::store::StoreError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("pipeline definition: {0}")]
    Definition(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("corpus: {0}")]
    Corpus(String),
    #[error("lint found {errors} error(s): {}", findings.join("; "))]
    Lint { errors: usize, findings: Vec<String> },
    #[error("killed after stage {stage}")]
    Killed { stage: StageId },
    #[error("state flush failed: {0}")]
    Flush(String),
    #[error(transparent)]
    Review(#[from] ReviewError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Provenance(#[from] ProvenanceError),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error(transparent)]
    Contract(#[from] ContractError),
}
