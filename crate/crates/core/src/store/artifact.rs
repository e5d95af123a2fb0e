//! Append-only artifact versions: `<stem>_v<k>.<ext>`, a `.latest` pointer
//! naming the newest version, and the canonical path holding its content.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Store, StoreError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactVersion {
    /// Canonical path, e.g. `output/refine-logs/FINAL_PROPOSAL.md`.
    pub stem: String,
    pub version: u32,
    /// Hex SHA-256 of the content.
    pub content_digest: String,
    /// Store-relative path of this version.
    pub path: String,
}

fn split_ext(canonical: &str) -> (&str, &str) {
    let file_start = canonical.rfind('/').map_or(0, |i| i + 1);
    match canonical[file_start..].rfind('.') {
        Some(dot) if dot > 0 => canonical.split_at(file_start + dot),
        _ => (canonical, ""),
    }
}

/// `output/X.md`, 3 → `output/X_v3.md`
pub fn versioned_path(canonical: &str, version: u32) -> String {
    let (base, ext) = split_ext(canonical);
    format!("{base}_v{version}{ext}")
}

pub fn latest_pointer_path(canonical: &str) -> String {
    format!("{canonical}.latest")
}

impl Store {
    /// Existing version numbers for a canonical path, ascending.
    pub fn artifact_versions(&self, canonical: &str) -> Result<Vec<u32>, StoreError> {
        let path = self.resolve(canonical)?;
        let dir = path.parent().expect("resolved path has parent");
        let (base, ext) = split_ext(canonical);
        let base_name = Path::new(base).file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let prefix = format!("{base_name}_v");
        let Ok(read) = std::fs::read_dir(dir) else {
            return Ok(Vec::new());
        };
        let mut versions: Vec<u32> = read
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                let middle = name.strip_prefix(&prefix)?.strip_suffix(ext)?;
                middle.parse::<u32>().ok().filter(|v| *v >= 1)
            })
            .collect();
        versions.sort_unstable();
        Ok(versions)
    }

    pub fn latest_version(&self, canonical: &str) -> Result<Option<u32>, StoreError> {
        Ok(self.artifact_versions(canonical)?.last().copied())
    }

    /// Writes a new version (max + 1, or 1), then moves the pointer and the
    /// canonical copy to it. Identical content still makes a new version.
    pub fn version_artifact(&self, canonical: &str, content: &[u8]) -> Result<ArtifactVersion, StoreError> {
        let version = self.latest_version(canonical)?.unwrap_or(0) + 1;
        let path = versioned_path(canonical, version);
        self.write_atomic(&path, content)?;
        let file_name = Path::new(&path).file_name().expect("file name").to_string_lossy().into_owned();
        self.write_atomic(&latest_pointer_path(canonical), format!("{file_name}\n").as_bytes())?;
        self.write_atomic(canonical, content)?;
        Ok(ArtifactVersion {
            stem: canonical.to_string(),
            version,
            content_digest: hex::encode(Sha256::digest(content)),
            path,
        })
    }

    pub fn read_artifact_version(&self, canonical: &str, version: u32) -> Result<Option<Vec<u8>>, StoreError> {
        self.read(&versioned_path(canonical, version))
    }

    /// File name the latest pointer names, if any.
    pub fn latest_pointer(&self, canonical: &str) -> Result<Option<String>, StoreError> {
        Ok(self
            .read_to_string(&latest_pointer_path(canonical))?
            .map(|s| s.trim().to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn naming() {
        assert_eq!(versioned_path("output/refine-logs/FINAL_PROPOSAL.md", 3), "output/refine-logs/FINAL_PROPOSAL_v3.md");
        assert_eq!(versioned_path("output/REPORT", 1), "output/REPORT_v1");
        assert_eq!(versioned_path("a.b/c", 2), "a.b/c_v2");
    }

    #[test]
    fn three_writes() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let stem = "output/refine-logs/FINAL_PROPOSAL.md";
        for (i, body) in ["one", "two", "two"].iter().enumerate() {
            let v = store.version_artifact(stem, body.as_bytes()).unwrap();
            assert_eq!(v.version, i as u32 + 1);
        }
        assert_eq!(store.artifact_versions(stem).unwrap(), vec![1, 2, 3]);
        assert_eq!(store.latest_pointer(stem).unwrap().as_deref(), Some("FINAL_PROPOSAL_v3.md"));
        assert_eq!(store.read_artifact_version(stem, 1).unwrap().unwrap(), b"one");
        assert_eq!(store.read(stem).unwrap().unwrap(), b"two");
    }
}
