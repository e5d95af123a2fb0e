//! The `Score: X.X (N:x, R:x, L:x, C:x, I:x)` line in reviewer output.
//!
//! The five letter-keyed values are authoritative. The leading aggregate is
//! recomputed from them and a disagreement is reported as a warning.

use std::sync::OnceLock;

use regex::Regex;
use rust_decimal::prelude::ToPrimitive;
use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Serialize};

use crate::review::{exact, Dimension, ScoreVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSignature {
    pub scores: ScoreVector,
    pub stated: f64,
    pub recomputed: f64,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SignatureParse {
    Found(ScoreSignature),
    NoSignature,
}

impl SignatureParse {
    pub fn scores(&self) -> Option<ScoreVector> {
        match self {
            SignatureParse::Found(sig) => Some(sig.scores),
            SignatureParse::NoSignature => None,
        }
    }
}

fn signature_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"Score:\s*(\d+(?:\.\d+)?)\s*\(([^)]*)\)").expect("valid regex"))
}

fn pair_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*([A-Z])\s*:\s*(\d+(?:\.\d+)?)\s*$").expect("valid regex"))
}

fn parse_pairs(inner: &str) -> Option<ScoreVector> {
    let mut values: [Option<f64>; 5] = [None; 5];
    for part in inner.split(',') {
        let caps = pair_re().captures(part)?;
        let dimension = Dimension::from_letter(caps[1].chars().next()?)?;
        let slot = &mut values[dimension.index()];
        if slot.is_some() {
            return None;
        }
        *slot = Some(caps[2].parse().ok()?);
    }
    let mut out = [0.0; 5];
    for (o, v) in out.iter_mut().zip(values) {
        *o = v?;
    }
    Some(ScoreVector::from_array(out))
}

/// Parses the first well-formed signature, recomputing under equal weights.
pub fn parse_score_signature(text: &str) -> SignatureParse {
    parse_score_signature_with(text, &[0.2; 5])
}

pub fn parse_score_signature_with(text: &str, weights: &[f64; 5]) -> SignatureParse {
    for caps in signature_re().captures_iter(text) {
        let Some(scores) = parse_pairs(&caps[2]) else {
            continue;
        };
        let stated_text = &caps[1];
        let stated: f64 = stated_text.parse().unwrap_or(f64::NAN);
        let places = stated_text.split_once('.').map_or(0, |(_, frac)| frac.len()) as u32;
        let recomputed_exact = scores.weighted_exact(weights);
        let rounded = recomputed_exact.round_dp_with_strategy(places.max(1), RoundingStrategy::MidpointAwayFromZero);
        let warning = (rounded != exact(stated)).then(|| {
            format!("stated score {stated_text} does not match recomputed {}", recomputed_exact.normalize())
        });
        return SignatureParse::Found(ScoreSignature {
            scores,
            stated,
            recomputed: recomputed_exact.to_f64().unwrap_or(f64::NAN),
            warning,
        });
    }
    SignatureParse::NoSignature
}

/// Renders a signature with the aggregate under equal weights, one decimal.
pub fn format_score_signature(scores: &ScoreVector) -> String {
    let weighted: Decimal = scores
        .weighted_exact(&[0.2; 5])
        .round_dp_with_strategy(1, RoundingStrategy::MidpointAwayFromZero);
    let pairs: Vec<String> = Dimension::ALL
        .iter()
        .map(|d| format!("{}:{}", d.letter(), scores.get(*d)))
        .collect();
    format!("Score: {weighted:.1} ({})", pairs.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printed_format() {
        let SignatureParse::Found(sig) = parse_score_signature("Score: 7.7 (N:8, R:8, L:8, C:7, I:7.5)") else {
            panic!("expected signature");
        };
        assert_eq!(sig.scores, ScoreVector::new(8.0, 8.0, 8.0, 7.0, 7.5));
        assert_eq!(sig.warning, None);
    }

    #[test]
    fn stated_aggregate_is_not_trusted() {
        let SignatureParse::Found(sig) = parse_score_signature("Score: 9.0 (N:10, R:10, L:10, C:10, I:10)") else {
            panic!("expected signature");
        };
        assert_eq!(sig.scores, ScoreVector::uniform(10.0));
        assert_eq!(sig.recomputed, 10.0);
        assert!(sig.warning.is_some());
    }

    #[test]
    fn absent_or_incomplete() {
        assert_eq!(parse_score_signature("no scores here"), SignatureParse::NoSignature);
        assert_eq!(parse_score_signature("Score: 7.0 (N:7, R:7, L:7, C:7)"), SignatureParse::NoSignature);
        assert_eq!(parse_score_signature("Score: 7.0 (N:7, N:7, L:7, C:7, I:7)"), SignatureParse::NoSignature);
    }

    #[test]
    fn letter_order_is_free() {
        let sig = parse_score_signature("Score: 6.0 (I:2, C:4, L:6, R:8, N:10)").scores().unwrap();
        assert_eq!(sig, ScoreVector::new(10.0, 8.0, 6.0, 4.0, 2.0));
    }

    #[test]
    fn format_then_parse() {
        let v = ScoreVector::new(8.0, 8.0, 8.0, 7.0, 7.5);
        assert_eq!(format_score_signature(&v), "Score: 7.7 (N:8, R:8, L:8, C:7, I:7.5)");
        assert_eq!(parse_score_signature(&format_score_signature(&v)).scores(), Some(v));
        assert_eq!(format_score_signature(&ScoreVector::uniform(10.0)), "Score: 10.0 (N:10, R:10, L:10, C:10, I:10)");
    }
}
