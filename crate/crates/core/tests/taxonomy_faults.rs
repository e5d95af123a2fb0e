mod common;

use common::faults::fault_scenario;
use harness_core::pipeline::ErrorClass;

#[test]
fn missing_input_halts_with_diagnostic() {
    fault_scenario(ErrorClass::MissingInput).unwrap();
}

#[test]
fn unavailable_agent_falls_back() {
    fault_scenario(ErrorClass::ToolUnavailable).unwrap();
}

#[test]
fn exhausted_review_halts_with_gap_report() {
    fault_scenario(ErrorClass::QualityBelowThreshold).unwrap();
}

#[test]
fn corrupt_handoff_restarts_unfinished_skill() {
    fault_scenario(ErrorClass::StateCorruption).unwrap();
}

#[test]
fn oversized_write_is_chunked() {
    fault_scenario(ErrorClass::ResourceLimit).unwrap();
}

#[test]
fn timeout_retries_once_then_halts() {
    fault_scenario(ErrorClass::ExternalTimeout).unwrap();
}
