//! One scored review round and the reviewer-output conventions it is read
//! from.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{Dimension, ScoreVector, Tier};
use crate::backend::parse_score_signature;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Critique {
    pub dimension: Dimension,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewRound {
    pub round_no: u32,
    pub thread_id: String,
    pub scores: ScoreVector,
    pub critiques: Vec<Critique>,
    /// Free-text label such as READY or ALMOST, recorded verbatim.
    pub verdict_label: String,
    pub reviewer: String,
    pub reviewer_quality: Tier,
}

/// What a reviewer's raw output carries.
#[derive(Debug, Clone, PartialEq)]
pub struct ReviewerOutput {
    pub scores: Option<ScoreVector>,
    pub critiques: Vec<Critique>,
    pub verdict_label: String,
    pub warning: Option<String>,
}

fn critique_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^\s*[-*]\s*\[([NRLCI])\]\s*(\S.*?)\s*$").expect("valid regex"))
}

fn verdict_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?mi)^\s*verdict:\s*(\S.*?)\s*$").expect("valid regex"))
}

/// Reads the score signature, `- [X] text` critique bullets keyed by
/// dimension letter, and a `Verdict:` line.
pub fn parse_reviewer_output(raw: &str) -> ReviewerOutput {
    let signature = parse_score_signature(raw);
    let critiques = critique_re()
        .captures_iter(raw)
        .filter_map(|c| {
            Some(Critique {
                dimension: Dimension::from_letter(c[1].chars().next()?)?,
                text: c[2].to_string(),
            })
        })
        .collect();
    let verdict_label = verdict_re()
        .captures(raw)
        .map(|c| c[1].to_string())
        .unwrap_or_default();
    let warning = match &signature {
        crate::backend::SignatureParse::Found(sig) => sig.warning.clone(),
        crate::backend::SignatureParse::NoSignature => None,
    };
    ReviewerOutput {
        scores: signature.scores(),
        critiques,
        verdict_label,
        warning,
    }
}
