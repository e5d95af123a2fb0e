//! A corpus directory paired with a store root, and the backend the
//! corpus configuration selects.

use std::path::{Path, PathBuf};

use thiserror::Error;

use harness_core::backend::{AgentBackend, MockBackend, RemoteBackend};
use harness_core::pipeline::{BackendConfig, Corpus, GateError, PipelineError, TelemetryError};
use harness_core::store::{Store, StoreError};

/// Mock cursors live beside the store so repeated invocations continue
/// the script where the last one stopped.
pub const MOCK_CURSOR_FILE: &str = "backend/mock-cursor.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error("backend: {0}")]
    Backend(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub struct Workspace {
    pub corpus: Corpus,
    pub store: Store,
}

impl Workspace {
    pub fn open(corpus_dir: &Path, store_dir: &Path) -> Result<Self, CliError> {
        Ok(Self {
            corpus: Corpus::load(corpus_dir)?,
            store: Store::open(store_dir)?,
        })
    }

    pub fn backend(&self) -> Result<Box<dyn AgentBackend>, CliError> {
        match &self.corpus.config.backend {
            BackendConfig::Mock { script } => {
                let path = self.corpus.dir.join(script);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| CliError::Backend(format!("{}: {e}", path.display())))?;
                let mock = MockBackend::from_text(&text)
                    .map_err(|e| CliError::Backend(format!("{}: {e}", path.display())))?
                    .with_cursor_file(self.store.root().join(MOCK_CURSOR_FILE))
                    .with_store(self.store.clone());
                Ok(Box::new(mock))
            }
            BackendConfig::Remote(config) => RemoteBackend::new(config.clone())
                .map(|b| Box::new(b) as Box<dyn AgentBackend>)
                .map_err(|e| CliError::Backend(e.to_string())),
        }
    }
}

/// `<corpus>/state` unless a store root is given.
pub fn default_store_dir(corpus_dir: &Path) -> PathBuf {
    corpus_dir.join("state")
}
