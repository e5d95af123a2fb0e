//! Shared rig for the pipeline integration tests: the fixture corpus, a
//! fresh store and a mock backend whose cursors survive restarts.

#![allow(dead_code)]

pub mod faults;

use std::path::{Path, PathBuf};

use harness_core::backend::MockBackend;
use harness_core::pipeline::{
    resume, run_pipeline, Corpus, GateResponder, PipelineError, RunEnv, RunOptions, RunReport,
};
use harness_core::stage::StageId;
use harness_core::store::Store;

pub fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/research-corpus")
}

pub fn default_script() -> String {
    std::fs::read_to_string(corpus_dir().join("mock/script.txt")).unwrap()
}

/// Default script with extra blocks placed before it, so they win for the
/// agents they name.
pub fn script_with(prefix: &str) -> String {
    let base = default_script();
    let mut out = String::from(prefix);
    out.push('\n');
    for block in base.split("\n>>> ").skip(1) {
        let agent = block.split_whitespace().next().unwrap_or("");
        if !prefix.contains(&format!(">>> {agent}\n")) && !prefix.contains(&format!(">>> {agent} ")) {
            out.push_str(">>> ");
            out.push_str(block);
            out.push('\n');
        }
    }
    out
}

pub struct Rig {
    pub corpus: Corpus,
    pub dir: tempfile::TempDir,
    pub store: Store,
    pub script: String,
}

impl Rig {
    pub fn new() -> Self {
        Self::with_script(&default_script())
    }

    pub fn with_script(script: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path().join("store")).unwrap();
        Self {
            corpus: Corpus::load(corpus_dir()).unwrap(),
            dir,
            store,
            script: script.to_string(),
        }
    }

    /// A fresh backend process; cursors and usage carry over.
    pub fn backend(&self) -> MockBackend {
        MockBackend::from_text(&self.script)
            .unwrap()
            .with_cursor_file(self.dir.path().join("mock-cursor.json"))
            .with_store(self.store.clone())
    }

    pub fn run(&self, responder: &mut dyn GateResponder, kill_after: Option<StageId>) -> Result<RunReport, PipelineError> {
        let backend = self.backend();
        let mut env = RunEnv {
            corpus: &self.corpus,
            store: &self.store,
            backend: &backend,
            responder,
            options: RunOptions { kill_after_stage: kill_after, session_id: Some("s1".into()) },
        };
        run_pipeline(&mut env)
    }

    pub fn resume(&self, responder: &mut dyn GateResponder) -> Result<RunReport, PipelineError> {
        let backend = self.backend();
        let mut env = RunEnv {
            corpus: &self.corpus,
            store: &self.store,
            backend: &backend,
            responder,
            options: RunOptions { kill_after_stage: None, session_id: Some("s2".into()) },
        };
        resume(&mut env)
    }

    pub fn audit_lines(&self) -> Vec<String> {
        self.store.audit_entries().unwrap().iter().map(|e| format!("{}: {}", e.skill, e.summary)).collect()
    }

    pub fn calls(&self) -> u64 {
        use harness_core::backend::AgentBackend;
        self.backend().calls()
    }
}

pub fn plan_skills(corpus: &Corpus) -> Vec<String> {
    corpus.definition.steps().iter().map(|s| s.spec.skill.clone()).collect()
}
