//! Aggregation of several reviewers' scores for the same round.

use std::collections::BTreeSet;

use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::{exact, Critique, Dimension, ReviewError, ReviewRound, ScoreVector};

pub const DEFAULT_CONFLICT_DELTA: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conflict {
    pub dimension: Dimension,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub scores: ScoreVector,
    /// Union of critiques, first occurrence order, duplicates dropped.
    pub critiques: Vec<Critique>,
    /// Dimensions whose max − min exceeds the delta; for human arbitration.
    pub conflicts: Vec<Conflict>,
}

/// Per-dimension mean with equal reviewer weights.
pub fn aggregate_ensemble(rounds: &[ReviewRound], conflict_delta: f64) -> Result<EnsembleResult, ReviewError> {
    let first = rounds.first().ok_or(ReviewError::EmptyEnsemble)?;
    if rounds.iter().any(|r| r.round_no != first.round_no) {
        return Err(ReviewError::MixedRounds);
    }
    let n = Decimal::from(rounds.len() as u64);
    let delta = exact(conflict_delta);
    let mut means = [0.0; 5];
    let mut conflicts = Vec::new();
    for dimension in Dimension::ALL {
        let values: Vec<Decimal> = rounds.iter().map(|r| exact(r.scores.get(dimension))).collect();
        let sum: Decimal = values.iter().sum();
        means[dimension.index()] = (sum / n).to_f64().unwrap_or(f64::NAN);
        let max = values.iter().max().expect("nonempty");
        let min = values.iter().min().expect("nonempty");
        let spread = max - min;
        if spread > delta {
            conflicts.push(Conflict {
                dimension,
                spread: spread.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    let mut seen = BTreeSet::new();
    let critiques = rounds
        .iter()
        .flat_map(|r| r.critiques.iter())
        .filter(|c| seen.insert((c.dimension, c.text.trim().to_lowercase())))
        .cloned()
        .collect();
    Ok(EnsembleResult {
        scores: ScoreVector::from_array(means),
        critiques,
        conflicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::review::Tier;

    fn round(no: u32, scores: ScoreVector, critique: &str) -> ReviewRound {
        ReviewRound {
            round_no: no,
            thread_id: "t".into(),
            scores,
            critiques: vec![Critique { dimension: Dimension::Rigor, text: critique.into() }],
            verdict_label: String::new(),
            reviewer: "r".into(),
            reviewer_quality: Tier::High,
        }
    }

    #[test]
    fn mean_without_conflict() {
        let rounds = [
            round(1, ScoreVector::new(8.0, 7.0, 7.0, 7.0, 7.0), "a"),
            round(1, ScoreVector::new(6.0, 7.0, 7.0, 7.0, 7.0), "b"),
            round(1, ScoreVector::new(7.0, 7.0, 7.0, 7.0, 7.0), "A "),
        ];
        let out = aggregate_ensemble(&rounds, DEFAULT_CONFLICT_DELTA).unwrap();
        assert_eq!(out.scores.novelty, 7.0);
        assert!(out.conflicts.is_empty());
        assert_eq!(out.critiques.len(), 2);
    }

    #[test]
    fn rigor_conflict() {
        let rounds = [
            round(1, ScoreVector::new(7.0, 9.0, 7.0, 7.0, 7.0), "a"),
            round(1, ScoreVector::new(7.0, 4.0, 7.0, 7.0, 7.0), "a"),
            round(1, ScoreVector::new(7.0, 8.0, 7.0, 7.0, 7.0), "a"),
        ];
        let out = aggregate_ensemble(&rounds, DEFAULT_CONFLICT_DELTA).unwrap();
        assert_eq!(out.conflicts, vec![Conflict { dimension: Dimension::Rigor, spread: 5.0 }]);
    }

    #[test]
    fn singleton_and_empty() {
        let r = round(2, ScoreVector::new(1.5, 2.0, 3.0, 4.0, 5.0), "x");
        assert_eq!(aggregate_ensemble(std::slice::from_ref(&r), 3.0).unwrap().scores, r.scores);
        assert!(matches!(aggregate_ensemble(&[], 3.0), Err(ReviewError::EmptyEnsemble)));
        assert!(matches!(
            aggregate_ensemble(&[r.clone(), round(3, r.scores, "x")], 3.0),
            Err(ReviewError::MixedRounds)
        ));
    }
}
