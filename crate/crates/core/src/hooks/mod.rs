//! Runtime hooks: the pre-tool-use policy gate and the stop-hook flush.

mod policy;
mod stop;

pub use policy::{
    audit_tool_log, evaluate_call, pre_tool_gate, DeniedPattern, PolicyDecision, PolicySet, ToolCall, ToolLogEntry,
    Verdict, DEFAULT_DENIED, DEFAULT_PROTECTED, RULE_ALLOWLIST, RULE_DEFAULT_ALLOW, RULE_DESTRUCTIVE,
    RULE_NO_ALLOWLIST, RULE_PROTECTED,
};
pub use stop::{render_memory, run_stop_hook, SessionState, StopFailure, StopReport};
