//! Durable state under a single store root.
//!
//! ```text
//! <root>/
//!   handoff.json               pipeline handoff (eight sections)
//!   memory/MEMORY.md           free-text memory summary
//!   memory/reviewer_memory.json
//!   output/PROJ_NOTES.md       append-only audit log
//!   checkpoints/<skill>.json   per-skill checkpoints
//!   checkpoints/archive/       stale checkpoints, moved aside
//!   logs/tool_calls.log        policy-gate decisions
//!   logs/events.jsonl          event stream
//!   logs/telemetry.jsonl       telemetry ledger
//!   gates.json                 human gate registry
//!   .harness.lock              single-writer advisory lock
//! ```
//!
//! Every whole-file write goes through [`Store::write_atomic`]
//! (write-then-rename), so an interrupted write leaves the previous file
//! intact.

mod artifact;
mod audit;
mod checkpoint;
mod events;
mod handoff;

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use fs2::FileExt;
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::clock::{Clock, SystemClock};

pub use artifact::{latest_pointer_path, versioned_path, ArtifactVersion};
pub use audit::{AuditEntry, ParseAuditError};
pub use checkpoint::{CheckpointRecord, CheckpointStatus, STALE_AFTER_HOURS};
pub use events::Event;
pub use handoff::{
    ExperimentSection, HandoffLoad, HandoffRecord, PaperSection, PipelineSection, RecoverySection, ReviewSection,
    SessionSection, TokenBudgetSection,
};

pub const HANDOFF_FILE: &str = "handoff.json";
pub const MEMORY_FILE: &str = "memory/MEMORY.md";
pub const REVIEWER_MEMORY_FILE: &str = "memory/reviewer_memory.json";
pub const AUDIT_FILE: &str = "output/PROJ_NOTES.md";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const CHECKPOINT_ARCHIVE_DIR: &str = "checkpoints/archive";
pub const TOOL_LOG_FILE: &str = "logs/tool_calls.log";
pub const EVENTS_FILE: &str = "logs/events.jsonl";
pub const TELEMETRY_FILE: &str = "logs/telemetry.jsonl";
pub const GATES_FILE: &str = "gates.json";
pub const LOCK_FILE: &str = ".harness.lock";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("storage failure at {path}: {source}")]
    Storage {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("audit summary must be a single line")]
    MultilineSummary,
    #[error("invalid audit entry: {0}")]
    InvalidAuditEntry(String),
    #[error("checkpoint for `{skill}` is corrupt: {reason}")]
    CorruptCheckpoint { skill: String, reason: String },
    #[error("store at {0} is locked by another writer")]
    Locked(PathBuf),
    #[error("path `{0}` escapes the store root")]
    OutsideRoot(String),
}

impl StoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        StoreError::Storage {
            path: path.into(),
            source,
        }
    }
}

/// Where to interrupt the next atomic write, for crash testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultPoint {
    /// Fail before anything touches disk.
    BeforeTempWrite,
    /// Write this many bytes of the temp file, then fail.
    PartialTempWrite(usize),
    /// Write the whole temp file, then fail before the rename.
    BeforeRename,
}

#[derive(Debug)]
struct PendingFault {
    target: String,
    point: FaultPoint,
}

/// Handle to a store root. Cheap to clone; clones share the write mutex.
#[derive(Clone)]
pub struct Store {
    root: PathBuf,
    clock: Arc<dyn Clock>,
    write_mutex: Arc<Mutex<()>>,
    txn_mutex: Arc<Mutex<()>>,
    fault: Arc<Mutex<Option<PendingFault>>>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("root", &self.root).finish()
    }
}

/// Exclusive writer lock on a store root, released on drop.
#[derive(Debug)]
pub struct WriterLock {
    file: File,
}

impl Drop for WriterLock {
    fn drop(&mut self) {
        let _ = FileExt::unlock(&self.file);
    }
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        Self::with_clock(root, Arc::new(SystemClock))
    }

    pub fn with_clock(root: impl Into<PathBuf>, clock: Arc<dyn Clock>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| StoreError::io(&root, e))?;
        Ok(Self {
            root,
            clock,
            write_mutex: Arc::new(Mutex::new(())),
            txn_mutex: Arc::new(Mutex::new(())),
            fault: Arc::new(Mutex::new(None)),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    /// Takes the single-writer advisory lock; fails if another process
    /// holds it.
    pub fn lock_writer(&self) -> Result<WriterLock, StoreError> {
        let path = self.root.join(LOCK_FILE);
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(|e| StoreError::io(&path, e))?;
        file.try_lock_exclusive().map_err(|_| StoreError::Locked(self.root.clone()))?;
        Ok(WriterLock { file })
    }

    /// Resolves a store-relative path, rejecting absolute paths and `..`.
    pub fn resolve(&self, rel: &str) -> Result<PathBuf, StoreError> {
        if !crate::document::skill::is_safe_relative_path(rel) {
            return Err(StoreError::OutsideRoot(rel.to_string()));
        }
        Ok(self.root.join(rel))
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.resolve(rel).map(|p| p.exists()).unwrap_or(false)
    }

    /// Arms a one-shot fault for the next atomic write whose store-relative
    /// path ends with `target`.
    pub fn inject_fault(&self, target: &str, point: FaultPoint) {
        *self.fault.lock().expect("fault mutex") = Some(PendingFault {
            target: target.to_string(),
            point,
        });
    }

    fn take_fault(&self, rel: &str) -> Option<FaultPoint> {
        let mut slot = self.fault.lock().expect("fault mutex");
        match slot.as_ref() {
            Some(f) if rel.ends_with(&f.target) => slot.take().map(|f| f.point),
            _ => None,
        }
    }

    /// Replaces `rel` with `bytes` via a temp file and rename.
    pub fn write_atomic(&self, rel: &str, bytes: &[u8]) -> Result<PathBuf, StoreError> {
        let path = self.resolve(rel)?;
        let _guard = self.write_mutex.lock().expect("write mutex");
        let fault = self.take_fault(rel);
        let injected = |what: &str| StoreError::io(&path, io::Error::other(format!("injected fault: {what}")));
        if fault == Some(FaultPoint::BeforeTempWrite) {
            return Err(injected("before temp write"));
        }
        let dir = path.parent().expect("joined path has parent");
        fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
        let file_name = path.file_name().expect("file name").to_string_lossy();
        let tmp = dir.join(format!(".{file_name}.tmp"));
        {
            let mut file = File::create(&tmp).map_err(|e| StoreError::io(&tmp, e))?;
            if let Some(FaultPoint::PartialTempWrite(n)) = fault {
                file.write_all(&bytes[..n.min(bytes.len())]).map_err(|e| StoreError::io(&tmp, e))?;
                return Err(injected("partial temp write"));
            }
            file.write_all(bytes).map_err(|e| StoreError::io(&tmp, e))?;
            file.sync_all().map_err(|e| StoreError::io(&tmp, e))?;
        }
        if fault == Some(FaultPoint::BeforeRename) {
            return Err(injected("before rename"));
        }
        fs::rename(&tmp, &path).map_err(|e| StoreError::io(&path, e))?;
        Ok(path)
    }

    pub fn read(&self, rel: &str) -> Result<Option<Vec<u8>>, StoreError> {
        let path = self.resolve(rel)?;
        match fs::read(&path) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(StoreError::io(path, e)),
        }
    }

    pub fn read_to_string(&self, rel: &str) -> Result<Option<String>, StoreError> {
        let path = self.resolve(rel)?;
        match fs::read_to_string(&path) {
            Ok(text) => Ok(Some(text)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(StoreError::io(path, e)),
        }
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<PathBuf, StoreError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| StoreError::SchemaViolation(e.to_string()))?;
        text.push('\n');
        self.write_atomic(rel, text.as_bytes())
    }

    pub fn read_json<T: DeserializeOwned>(&self, rel: &str) -> Result<Option<T>, StoreError> {
        match self.read(rel)? {
            None => Ok(None),
            Some(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| StoreError::SchemaViolation(format!("{rel}: {e}"))),
        }
    }

    /// Appends one line (a trailing newline is added). Appends are
    /// serialized through the store's write mutex.
    pub fn append_line(&self, rel: &str, line: &str) -> Result<(), StoreError> {
        let path = self.resolve(rel)?;
        let _guard = self.write_mutex.lock().expect("write mutex");
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| StoreError::io(dir, e))?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| StoreError::io(&path, e))?;
        file.write_all(format!("{line}\n").as_bytes())
            .map_err(|e| StoreError::io(&path, e))?;
        file.sync_data().map_err(|e| StoreError::io(&path, e))
    }

    /// Lines of a line-oriented file, empty when absent.
    pub fn read_lines(&self, rel: &str) -> Result<Vec<String>, StoreError> {
        Ok(self
            .read_to_string(rel)?
            .map(|text| text.lines().map(str::to_string).collect())
            .unwrap_or_default())
    }

    pub fn remove(&self, rel: &str) -> Result<bool, StoreError> {
        let path = self.resolve(rel)?;
        let _guard = self.write_mutex.lock().expect("write mutex");
        match fs::remove_file(&path) {
            Ok(()) => Ok(true),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(false),
            Err(e) => Err(StoreError::io(path, e)),
        }
    }

    /// Runs a read-modify-write sequence exclusively among clones of this
    /// handle.
    pub fn transaction<T>(&self, f: impl FnOnce() -> T) -> T {
        let _guard = self.txn_mutex.lock().unwrap_or_else(|e| e.into_inner());
        f()
    }

    pub fn write_memory(&self, text: &str) -> Result<PathBuf, StoreError> {
        self.write_atomic(MEMORY_FILE, text.as_bytes())
    }

    pub fn read_memory(&self) -> Result<Option<String>, StoreError> {
        self.read_to_string(MEMORY_FILE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_faults_keep_old_content() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        store.write_atomic("a/b.txt", b"old").unwrap();
        for point in [FaultPoint::BeforeTempWrite, FaultPoint::PartialTempWrite(2), FaultPoint::BeforeRename] {
            store.inject_fault("b.txt", point);
            assert!(store.write_atomic("a/b.txt", b"new content").is_err());
            assert_eq!(store.read("a/b.txt").unwrap().unwrap(), b"old");
        }
        store.write_atomic("a/b.txt", b"new").unwrap();
        assert_eq!(store.read("a/b.txt").unwrap().unwrap(), b"new");
    }

    #[test]
    fn paths_outside_root_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert!(matches!(store.write_atomic("../x", b""), Err(StoreError::OutsideRoot(_))));
        assert!(matches!(store.write_atomic("/etc/x", b""), Err(StoreError::OutsideRoot(_))));
    }

    #[test]
    fn writer_lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let held = store.lock_writer().unwrap();
        assert!(matches!(store.lock_writer(), Err(StoreError::Locked(_))));
        drop(held);
        assert!(store.lock_writer().is_ok());
    }
}

#[cfg(test)]
pub(crate) mod tests_support {
    pub(crate) fn sample_handoff() -> super::HandoffRecord {
        super::handoff::tests::sample()
    }
}
