//! The skill dependency manifest (`DEPENDENCY_GRAPH.yaml`).
//!
//! ```yaml
//! refine-research:
//!   reads:
//!     - output/IDEA_REPORT.md
//!   writes:
//!     - output/refine-logs/FINAL_PROPOSAL.md
//!   requires_before: [generate-idea, lit-review]
//!   enables_after: [experiment-design, deploy-experiment]
//! ```

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::DocumentError;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    #[serde(default)]
    pub reads: Vec<String>,
    #[serde(default)]
    pub writes: Vec<String>,
    #[serde(default)]
    pub requires_before: Vec<String>,
    #[serde(default)]
    pub enables_after: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DependencyManifest {
    pub entries: BTreeMap<String, ManifestEntry>,
    /// Skills named in `requires_before`/`enables_after` with no entry.
    pub unresolved: BTreeSet<String>,
}

impl DependencyManifest {
    pub fn from_entries(entries: BTreeMap<String, ManifestEntry>) -> Self {
        let unresolved = entries
            .values()
            .flat_map(|e| e.requires_before.iter().chain(&e.enables_after))
            .filter(|name| !entries.contains_key(*name))
            .cloned()
            .collect();
        Self { entries, unresolved }
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(&self.entries).expect("manifest serializes")
    }
}

pub fn parse_dependency_manifest(text: &str) -> Result<DependencyManifest, DocumentError> {
    let entries: Option<BTreeMap<String, Option<ManifestEntry>>> =
        serde_yaml::from_str(text).map_err(|e| DocumentError::MalformedManifest(e.to_string()))?;
    let entries = entries
        .unwrap_or_default()
        .into_iter()
        .map(|(name, entry)| (name, entry.unwrap_or_default()))
        .collect();
    Ok(DependencyManifest::from_entries(entries))
}

#[cfg(test)]
mod tests {
    use super::*;

    const REFINE: &str = "\
refine-research:
  reads:
    - output/IDEA_REPORT.md
    - output/LIT_REVIEW_REPORT.md
  writes:
    - output/refine-logs/FINAL_PROPOSAL.md
    - output/refine-logs/REFINE_STATE.json
  requires_before: [generate-idea, lit-review]
  enables_after: [experiment-design, deploy-experiment]
";

    #[test]
    fn refine_research_entry() {
        let m = parse_dependency_manifest(REFINE).unwrap();
        let e = &m.entries["refine-research"];
        assert_eq!(e.reads, ["output/IDEA_REPORT.md", "output/LIT_REVIEW_REPORT.md"]);
        assert_eq!(e.requires_before, ["generate-idea", "lit-review"]);
        assert_eq!(e.enables_after, ["experiment-design", "deploy-experiment"]);
        assert_eq!(m.unresolved.len(), 4);
    }

    #[test]
    fn empty_and_partial() {
        assert!(parse_dependency_manifest("{}").unwrap().entries.is_empty());
        assert!(parse_dependency_manifest("").unwrap().entries.is_empty());
        let m = parse_dependency_manifest("a:\n  requires_before: [ghost]\nb:\n").unwrap();
        assert_eq!(m.unresolved, BTreeSet::from(["ghost".to_string()]));
        assert_eq!(m.entries["b"], ManifestEntry::default());
    }

    #[test]
    fn malformed() {
        assert!(parse_dependency_manifest("- a\n- b\n").is_err());
        assert!(parse_dependency_manifest("a:\n  bogus: [x]\n").is_err());
    }
}
