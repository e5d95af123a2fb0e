//! Dataset provenance: the data manifest, access classification, local
//! validation of downloads, and source ranking.

mod access;
mod manifest;
mod rank;
mod record;
mod validate;

use thiserror::Error;

pub use access::{classify_access, exceeds_size_gate, AccessClass, AccessClassification, AccessDescriptor, DEFAULT_SIZE_GATE_BYTES};
pub use manifest::{
    load_manifest, parse_manifest, render_manifest, save_manifest, upsert_record, DATA_MANIFEST_FILE, MANIFEST_FIELDS,
};
pub use rank::{compare, rank_sources, Criterion, SourceCandidate, EQUAL_CRITERIA_WEIGHTS};
pub use record::{is_dataset_id, DatasetRecord, ValidationStatus};
pub use validate::{
    validate_dataset, CheckKind, DataFormat, DatasetValidation, ExpectedProperties, MetadataRange, ValidationCheck,
};

#[derive(Debug, Error)]
pub enum ProvenanceError {
    #[error("dataset `{id}`: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("source `{name}`: {reason}")]
    InvalidCandidate { name: String, reason: String },
    #[error("criteria weights must be non-negative and sum to 1: {0:?}")]
    Weights(Vec<f64>),
    #[error("cannot read {path}: {reason}")]
    FileUnreadable { path: String, reason: String },
    #[error("manifest line {line}: {reason}")]
    MalformedManifest { line: usize, reason: String },
    #[error("store: {0}")]
    Store(String),
}
