//! Reviewer memory: critiques accumulated per thread, replayed into the
//! next round's payload so earlier suspicions carry forward.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Critique, Dimension};
use crate::store::{Store, StoreError, REVIEWER_MEMORY_FILE};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub round: u32,
    pub dimension: Dimension,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewerMemory {
    threads: BTreeMap<String, Vec<MemoryEntry>>,
}

impl ReviewerMemory {
    pub fn load(store: &Store) -> Result<Self, StoreError> {
        Ok(store.read_json(REVIEWER_MEMORY_FILE)?.unwrap_or_default())
    }

    pub fn save(&self, store: &Store) -> Result<(), StoreError> {
        store.write_json(REVIEWER_MEMORY_FILE, self).map(|_| ())
    }

    pub fn thread(&self, thread_id: &str) -> &[MemoryEntry] {
        self.threads.get(thread_id).map_or(&[], Vec::as_slice)
    }

    pub fn threads(&self) -> impl Iterator<Item = &str> {
        self.threads.keys().map(String::as_str)
    }

    /// Appends one round's critiques. Existing entries are never touched.
    pub fn append(&mut self, thread_id: &str, round: u32, critiques: &[Critique]) {
        self.threads
            .entry(thread_id.to_string())
            .or_default()
            .extend(critiques.iter().map(|c| MemoryEntry {
                round,
                dimension: c.dimension,
                text: c.text.clone(),
            }));
    }
}
