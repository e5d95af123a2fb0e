//! Source ranking: tier first, then weighted criteria score, then name.

use std::cmp::{Ordering, Reverse};
use std::collections::BTreeMap;
use std::fmt;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::ProvenanceError;
use crate::review::exact;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Authority,
    Coverage,
    Usability,
    Freshness,
    Stability,
    Citability,
    FormatFitness,
    AccessCost,
    Documentation,
}

impl Criterion {
    pub const ALL: [Criterion; 9] = [
        Criterion::Authority,
        Criterion::Coverage,
        Criterion::Usability,
        Criterion::Freshness,
        Criterion::Stability,
        Criterion::Citability,
        Criterion::FormatFitness,
        Criterion::AccessCost,
        Criterion::Documentation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Authority => "authority",
            Criterion::Coverage => "coverage",
            Criterion::Usability => "usability",
            Criterion::Freshness => "freshness",
            Criterion::Stability => "stability",
            Criterion::Citability => "citability",
            Criterion::FormatFitness => "format_fitness",
            Criterion::AccessCost => "access_cost",
            Criterion::Documentation => "documentation",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CandidateRepr")]
pub struct SourceCandidate {
    pub name: String,
    pub tier: u8,
    pub criteria_scores: BTreeMap<Criterion, f64>,
}

#[derive(Deserialize)]
struct CandidateRepr {
    name: String,
    tier: u8,
    criteria_scores: BTreeMap<Criterion, f64>,
}

impl TryFrom<CandidateRepr> for SourceCandidate {
    type Error = ProvenanceError;

    fn try_from(r: CandidateRepr) -> Result<Self, Self::Error> {
        let candidate = SourceCandidate {
            name: r.name,
            tier: r.tier,
            criteria_scores: r.criteria_scores,
        };
        candidate.validate()?;
        Ok(candidate)
    }
}

impl SourceCandidate {
    /// Scores in [`Criterion::ALL`] order.
    pub fn new(name: &str, tier: u8, scores: [f64; 9]) -> Self {
        Self {
            name: name.to_string(),
            tier,
            criteria_scores: Criterion::ALL.into_iter().zip(scores).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), ProvenanceError> {
        let bad = |reason: String| ProvenanceError::InvalidCandidate {
            name: self.name.clone(),
            reason,
        };
        if !(1..=7).contains(&self.tier) {
            return Err(bad(format!("tier {} is outside 1-7", self.tier)));
        }
        if self.criteria_scores.len() != 9 {
            return Err(bad(format!("{} criteria scored, expected 9", self.criteria_scores.len())));
        }
        if let Some((c, v)) = self.criteria_scores.iter().find(|(_, v)| !(0.0..=10.0).contains(*v)) {
            return Err(bad(format!("{c} score {v} is outside [0, 10]")));
        }
        Ok(())
    }

    /// Σ wᵢ·sᵢ, exact over decimal forms.
    pub fn weighted_score(&self, weights: &[f64; 9]) -> Decimal {
        Criterion::ALL
            .iter()
            .zip(weights)
            .map(|(c, w)| exact(self.criteria_scores.get(c).copied().unwrap_or(0.0)) * exact(*w))
            .sum()
    }
}

pub const EQUAL_CRITERIA_WEIGHTS: [f64; 9] = [1.0 / 9.0; 9];

fn rank_key<'a>(c: &'a SourceCandidate, weights: &[f64; 9]) -> (u8, Reverse<Decimal>, &'a str) {
    (c.tier, Reverse(c.weighted_score(weights)), c.name.as_str())
}

/// Ascending tier, descending weighted score, then name.
pub fn rank_sources(candidates: &[SourceCandidate], weights: &[f64; 9]) -> Result<Vec<SourceCandidate>, ProvenanceError> {
    let sum: f64 = weights.iter().sum();
    if weights.iter().any(|w| w.is_nan() || *w < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(ProvenanceError::Weights(weights.to_vec()));
    }
    for c in candidates {
        c.validate()?;
    }
    let mut ranked = candidates.to_vec();
    ranked.sort_by(|a, b| compare(a, b, weights));
    Ok(ranked)
}

pub fn compare(a: &SourceCandidate, b: &SourceCandidate, weights: &[f64; 9]) -> Ordering {
    rank_key(a, weights).cmp(&rank_key(b, weights))
}
