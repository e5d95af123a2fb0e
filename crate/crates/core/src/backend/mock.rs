//! Script-driven test double.
//!
//! A script is a text file of blocks, each opened by a `>>>` header naming
//! the agent and optionally a failure mode:
//!
//! ```text
//! >>> peer-reviewer
//! Score: 5.0 (N:5, R:5, L:5, C:5, I:5)
//! Verdict: ALMOST
//! >>> peer-reviewer timeout
//! >>> paper-writer
//! Draft text.
//! @file output/paper/DRAFT.md
//! # Draft
//! >>> *
//! Default response from {agent}.
//! ```
//!
//! Responses for an agent are consumed in order. Once they run out the last
//! one repeats, and agents with no block of their own get the `*` block with
//! `{agent}` and `{thread}` substituted. Lines after `@file <path>` are
//! written to that store path instead of being returned in `raw`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{estimate_tokens, AgentBackend, AgentInvocation, AgentResult, BackendError, TokenUsage};
use crate::document::skill::is_safe_relative_path;
use crate::store::Store;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScriptedResponse {
    Text { raw: String, files: Vec<(String, String)> },
    Timeout,
    Unavailable,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum MockScriptError {
    #[error("line {line}: unknown response mode `{mode}`")]
    UnknownMode { line: usize, mode: String },
    #[error("line {line}: header names no agent")]
    MissingAgent { line: usize },
    #[error("line {line}: `@file` outside a text response")]
    StrayFile { line: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    pub responses: BTreeMap<String, Vec<ScriptedResponse>>,
    pub default: Option<String>,
}

struct Block {
    agent: String,
    mode: Option<String>,
    line: usize,
    body: Vec<String>,
}

impl MockScript {
    pub fn parse(text: &str) -> Result<Self, MockScriptError> {
        let mut blocks: Vec<Block> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if let Some(header) = line.strip_prefix(">>>") {
                let mut words = header.split_whitespace();
                let agent = words.next().ok_or(MockScriptError::MissingAgent { line: i + 1 })?;
                blocks.push(Block {
                    agent: agent.to_string(),
                    mode: words.next().map(str::to_string),
                    line: i + 1,
                    body: Vec::new(),
                });
            } else if let Some(block) = blocks.last_mut() {
                block.body.push(line.to_string());
            }
        }

        let mut script = MockScript::default();
        for block in blocks {
            let response = match block.mode.as_deref() {
                Some("timeout") => ScriptedResponse::Timeout,
                Some("unavailable") => ScriptedResponse::Unavailable,
                Some(mode) => {
                    return Err(MockScriptError::UnknownMode {
                        line: block.line,
                        mode: mode.to_string(),
                    })
                }
                None => split_files(&block.body),
            };
            if block.agent == "*" {
                match response {
                    ScriptedResponse::Text { raw, .. } => script.default = Some(raw),
                    _ => return Err(MockScriptError::StrayFile { line: block.line }),
                }
            } else {
                script.responses.entry(block.agent).or_default().push(response);
            }
        }
        Ok(script)
    }

    pub fn load(path: &Path) -> std::io::Result<Result<Self, MockScriptError>> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    /// The response for the `index`-th call to `agent`.
    pub fn response(&self, agent: &str, thread: &str, index: usize) -> Option<ScriptedResponse> {
        match self.responses.get(agent) {
            Some(list) if !list.is_empty() => Some(list[index.min(list.len() - 1)].clone()),
            _ => self.default.as_ref().map(|template| ScriptedResponse::Text {
                raw: template.replace("{agent}", agent).replace("{thread}", thread),
                files: Vec::new(),
            }),
        }
    }
}

fn trim_block(lines: &[String]) -> String {
    let end = lines.iter().rposition(|l| !l.trim().is_empty()).map_or(0, |i| i + 1);
    lines[..end].join("\n")
}

fn split_files(body: &[String]) -> ScriptedResponse {
    let mut sections: Vec<(Option<String>, Vec<String>)> = vec![(None, Vec::new())];
    for line in body {
        if let Some(path) = line.strip_prefix("@file ") {
            sections.push((Some(path.trim().to_string()), Vec::new()));
        } else {
            sections.last_mut().expect("nonempty").1.push(line.clone());
        }
    }
    let mut iter = sections.into_iter();
    let raw = trim_block(&iter.next().expect("head").1);
    let files = iter
        .map(|(path, lines)| {
            let mut content = trim_block(&lines);
            content.push('\n');
            (path.expect("file section"), content)
        })
        .collect();
    ScriptedResponse::Text { raw, files }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct MockState {
    cursors: BTreeMap<String, usize>,
    usage: TokenUsage,
    calls: u64,
}

/// Deterministic backend: same script and invocation order, same results.
pub struct MockBackend {
    script: MockScript,
    state: Mutex<MockState>,
    cursor_file: Option<PathBuf>,
    store: Option<Store>,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        Self {
            script,
            state: Mutex::new(MockState::default()),
            cursor_file: None,
            store: None,
        }
    }

    pub fn from_text(text: &str) -> Result<Self, MockScriptError> {
        Ok(Self::new(MockScript::parse(text)?))
    }

    /// Persists per-agent cursors to `path` after every call and restores
    /// them now, so a resumed process continues the script where the
    /// previous one stopped.
    pub fn with_cursor_file(mut self, path: impl Into<PathBuf>) -> Self {
        let path = path.into();
        if let Ok(bytes) = std::fs::read(&path) {
            if let Ok(state) = serde_json::from_slice::<MockState>(&bytes) {
                self.state = Mutex::new(state);
            }
        }
        self.cursor_file = Some(path);
        self
    }

    /// Enables `@file` writes into `store`.
    pub fn with_store(mut self, store: Store) -> Self {
        self.store = Some(store);
        self
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }

    fn persist(&self, state: &MockState) {
        if let Some(path) = &self.cursor_file {
            let tmp = path.with_extension("tmp");
            if let Ok(bytes) = serde_json::to_vec(state) {
                if std::fs::write(&tmp, bytes).is_ok() {
                    let _ = std::fs::rename(&tmp, path);
                }
            }
        }
    }
}

impl AgentBackend for MockBackend {
    fn invoke(&self, invocation: &AgentInvocation) -> Result<AgentResult, BackendError> {
        let mut state = self.state.lock().expect("mock state poisoned");
        let cursor = state.cursors.entry(invocation.agent.clone()).or_insert(0);
        let index = *cursor;
        *cursor += 1;
        let response = self.script.response(&invocation.agent, &invocation.thread_id, index);
        let outcome = match response {
            None => Err(BackendError::Unavailable {
                agent: invocation.agent.clone(),
                reason: "no scripted response".into(),
            }),
            Some(ScriptedResponse::Timeout) => Err(BackendError::Timeout {
                agent: invocation.agent.clone(),
            }),
            Some(ScriptedResponse::Unavailable) => Err(BackendError::Unavailable {
                agent: invocation.agent.clone(),
                reason: "scripted outage".into(),
            }),
            Some(ScriptedResponse::Text { raw, files }) => {
                if let Some((path, _)) = files.iter().find(|(p, _)| !is_safe_relative_path(p)) {
                    Err(BackendError::WriteOutsideStore { path: path.clone() })
                } else {
                    let tokens = TokenUsage {
                        input: estimate_tokens(&invocation.payload),
                        output: estimate_tokens(&raw),
                    };
                    let mut result = AgentResult::from_raw(raw, tokens);
                    if let Some(store) = &self.store {
                        for (path, content) in &files {
                            store
                                .write_atomic(path, content.as_bytes())
                                .map_err(|_| BackendError::WriteOutsideStore { path: path.clone() })?;
                            result.files_written.push(path.clone());
                        }
                    }
                    state.usage += tokens;
                    state.calls += 1;
                    Ok(result)
                }
            }
        };
        self.persist(&state);
        outcome
    }

    fn usage(&self) -> TokenUsage {
        self.state.lock().expect("mock state poisoned").usage
    }

    fn calls(&self) -> u64 {
        self.state.lock().expect("mock state poisoned").calls
    }
}
