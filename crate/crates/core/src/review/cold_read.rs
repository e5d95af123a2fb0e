//! Cold-read payloads: the evaluator sees the artifact and prior reviewer
//! memory, never the author's rationale.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::MemoryEntry;

pub const ARTIFACT_HEADING: &str = "## Artifact";
pub const MEMORY_HEADING: &str = "## Prior reviewer memory";

fn marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?im)^\s*(?:#+\s*|[-*]\s*)?((?:author(?:'s)?|generator)\s+(?:rationale|notes|context|intent|reasoning))\b|(<!--\s*author)",
        )
        .expect("valid regex")
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColdReadScan {
    pub author_context_present: bool,
    pub markers: Vec<String>,
}

/// Looks for author-context labels: headings, bullets or lines opening with
/// e.g. "Author rationale" or "Generator notes", and `<!-- author` comments.
pub fn scan_payload(payload: &str) -> ColdReadScan {
    let markers: Vec<String> = marker_re()
        .captures_iter(payload)
        .filter_map(|c| c.get(1).or_else(|| c.get(2)).map(|m| m.as_str().to_string()))
        .collect();
    ColdReadScan {
        author_context_present: !markers.is_empty(),
        markers,
    }
}

pub fn build_payload(artifact: &str, memory: &[MemoryEntry]) -> String {
    let mut out = format!("{ARTIFACT_HEADING}\n\n{}\n", artifact.trim_end());
    if !memory.is_empty() {
        out.push_str(&format!("\n{MEMORY_HEADING}\n\n"));
        for entry in memory {
            out.push_str(&format!("- round {} [{}] {}\n", entry.round, entry.dimension.letter(), entry.text));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::review::Dimension;

    #[test]
    fn clean_payload() {
        let memory = [MemoryEntry { round: 1, dimension: Dimension::Rigor, text: "weak".into() }];
        let payload = build_payload("# Paper\n\nBody text about authors of prior work.", &memory);
        assert!(payload.contains("- round 1 [R] weak"));
        assert!(!scan_payload(&payload).author_context_present);
    }

    #[test]
    fn detects_rationale() {
        for text in [
            "# Paper\n## Author rationale\nI chose X because",
            "Body\n- Generator notes: skip section 3",
            "Body <!-- author: reviewers will like this -->",
            "AUTHOR'S INTENT was to",
        ] {
            assert!(scan_payload(text).author_context_present, "{text}");
        }
    }
}
