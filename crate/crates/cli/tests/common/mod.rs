//! Fixture corpus paired with a throwaway store.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use harness_cli::Workspace;
use harness_core::pipeline::{LeavePending, RunOptions};

pub fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/research-corpus")
}

pub fn workspace() -> (tempfile::TempDir, Workspace) {
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::open(&corpus_dir(), &dir.path().join("state")).unwrap();
    (dir, ws)
}

/// Runs until the first gate and returns its exit code and output.
pub fn run_to_first_gate(ws: &Workspace) -> (i32, String) {
    let mut out = Vec::new();
    let code = harness_cli::commands::run(ws, &mut LeavePending, RunOptions::default(), &mut out).unwrap();
    (code, String::from_utf8(out).unwrap())
}
