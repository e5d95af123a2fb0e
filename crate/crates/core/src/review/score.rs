//! Five-dimension scores, the acceptance rule and confidence tiers.

use std::collections::BTreeSet;
use std::fmt;

use rust_decimal::prelude::ToPrimitive;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The decimal a float prints as.
pub(crate) fn exact(value: f64) -> Decimal {
    let text = value.to_string();
    text.parse()
        .or_else(|_| Decimal::from_scientific(&text))
        .unwrap_or(Decimal::ZERO)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Novelty,
    Rigor,
    LiteratureCoverage,
    Clarity,
    Impact,
}

impl Dimension {
    pub const ALL: [Dimension; 5] = [
        Dimension::Novelty,
        Dimension::Rigor,
        Dimension::LiteratureCoverage,
        Dimension::Clarity,
        Dimension::Impact,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Novelty => "novelty",
            Dimension::Rigor => "rigor",
            Dimension::LiteratureCoverage => "literature_coverage",
            Dimension::Clarity => "clarity",
            Dimension::Impact => "impact",
        }
    }

    /// Letter used in the `Score: X.X (N:, R:, L:, C:, I:)` signature.
    pub fn letter(self) -> char {
        match self {
            Dimension::Novelty => 'N',
            Dimension::Rigor => 'R',
            Dimension::LiteratureCoverage => 'L',
            Dimension::Clarity => 'C',
            Dimension::Impact => 'I',
        }
    }

    pub fn from_letter(letter: char) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.letter() == letter)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ScoreError {
    #[error("{dimension} score {value} is outside [0, 10]")]
    OutOfRange { dimension: Dimension, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreVector {
    pub novelty: f64,
    pub rigor: f64,
    pub literature_coverage: f64,
    pub clarity: f64,
    pub impact: f64,
}

impl ScoreVector {
    pub const fn new(novelty: f64, rigor: f64, literature_coverage: f64, clarity: f64, impact: f64) -> Self {
        Self {
            novelty,
            rigor,
            literature_coverage,
            clarity,
            impact,
        }
    }

    pub const fn uniform(value: f64) -> Self {
        Self::new(value, value, value, value, value)
    }

    pub fn from_array(values: [f64; 5]) -> Self {
        Self::new(values[0], values[1], values[2], values[3], values[4])
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.novelty, self.rigor, self.literature_coverage, self.clarity, self.impact]
    }

    pub fn get(&self, dimension: Dimension) -> f64 {
        self.to_array()[dimension.index()]
    }

    pub fn validate(&self) -> Result<(), ScoreError> {
        for dimension in Dimension::ALL {
            let value = self.get(dimension);
            if !(0.0..=10.0).contains(&value) {
                return Err(ScoreError::OutOfRange { dimension, value });
            }
        }
        Ok(())
    }

    /// Σ wᵢ·sᵢ, computed exactly over the shortest decimal form of each
    /// value so that equal weights over equal scores land on the score
    /// itself.
    pub fn weighted_exact(&self, weights: &[f64; 5]) -> Decimal {
        self.to_array()
            .iter()
            .zip(weights)
            .map(|(s, w)| exact(*s) * exact(*w))
            .sum()
    }

    pub fn weighted(&self, weights: &[f64; 5]) -> f64 {
        self.weighted_exact(weights).to_f64().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PolicyError {
    #[error("weights must be nonnegative and sum to 1, got {0:?}")]
    Weights([f64; 5]),
    #[error("threshold {0} is outside (0, 10]")]
    Threshold(f64),
    #[error("floor {0} is outside [0, 10]")]
    Floor(f64),
}

/// Weighted threshold plus per-dimension floors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptancePolicy {
    pub weights: [f64; 5],
    pub threshold: f64,
    pub floors: [f64; 5],
    /// Calibration examples per score level, passed to evaluators verbatim.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub anchors: Vec<String>,
}

pub const DEFAULT_THRESHOLD: f64 = 7.5;
pub const DEFAULT_FLOOR: f64 = 6.0;
/// Width of the medium-confidence band below the threshold.
pub const MEDIUM_BAND: f64 = 1.5;

impl Default for AcceptancePolicy {
    fn default() -> Self {
        Self {
            weights: [0.2; 5],
            threshold: DEFAULT_THRESHOLD,
            floors: [DEFAULT_FLOOR; 5],
            anchors: Vec::new(),
        }
    }
}

impl AcceptancePolicy {
    pub fn new(weights: [f64; 5], threshold: f64, floors: [f64; 5]) -> Result<Self, PolicyError> {
        let policy = Self {
            weights,
            threshold,
            floors,
            anchors: Vec::new(),
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn with_uniform_floor(threshold: f64, floor: f64) -> Result<Self, PolicyError> {
        Self::new([0.2; 5], threshold, [floor; 5])
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let sum: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|w| w.is_nan() || *w < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(PolicyError::Weights(self.weights));
        }
        if !(self.threshold > 0.0 && self.threshold <= 10.0) {
            return Err(PolicyError::Threshold(self.threshold));
        }
        if let Some(f) = self.floors.iter().find(|f| !(0.0..=10.0).contains(*f)) {
            return Err(PolicyError::Floor(*f));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub accepted: bool,
    pub weighted: f64,
    pub floor_failures: BTreeSet<Dimension>,
}

/// Accepts iff the weighted score is strictly above the threshold and no
/// dimension is under its floor.
pub fn decide(scores: &ScoreVector, policy: &AcceptancePolicy) -> Decision {
    let weighted_exact = scores.weighted_exact(&policy.weights);
    let weighted = weighted_exact.to_f64().unwrap_or(f64::NAN);
    let floor_failures: BTreeSet<Dimension> = Dimension::ALL
        .into_iter()
        .filter(|d| scores.get(*d) < policy.floors[d.index()])
        .collect();
    Decision {
        accepted: weighted_exact > exact(policy.threshold) && floor_failures.is_empty(),
        weighted,
        floor_failures,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Tier {
    High,
    Medium,
    Low,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::High => "HIGH",
            Tier::Medium => "MEDIUM",
            Tier::Low => "LOW",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// HIGH at or above the threshold, MEDIUM within 1.5 below it, LOW under.
pub fn confidence_gate(value: f64, threshold: f64) -> Tier {
    let (value, threshold) = (exact(value), exact(threshold));
    if value >= threshold {
        Tier::High
    } else if value >= threshold - exact(MEDIUM_BAND) {
        Tier::Medium
    } else {
        Tier::Low
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_examples() {
        let policy = AcceptancePolicy::default();
        let d = decide(&ScoreVector::new(8.0, 8.0, 8.0, 7.0, 7.5), &policy);
        assert!((d.weighted - 7.7).abs() < 1e-12);
        assert!(d.accepted);
        let d = decide(&ScoreVector::new(9.0, 9.0, 9.0, 9.0, 5.0), &policy);
        assert!((d.weighted - 8.2).abs() < 1e-12);
        assert!(!d.accepted);
        assert_eq!(d.floor_failures, BTreeSet::from([Dimension::Impact]));
        let d = decide(&ScoreVector::uniform(10.0), &AcceptancePolicy::with_uniform_floor(7.5, 10.0).unwrap());
        assert!(d.accepted);
    }

    #[test]
    fn ties_reject() {
        let policy = AcceptancePolicy::with_uniform_floor(7.0, 0.0).unwrap();
        assert!(!decide(&ScoreVector::uniform(7.0), &policy).accepted);
    }

    #[test]
    fn tiers() {
        assert_eq!(confidence_gate(7.6, 7.5), Tier::High);
        assert_eq!(confidence_gate(7.5, 7.5), Tier::High);
        assert_eq!(confidence_gate(6.3, 7.5), Tier::Medium);
        assert_eq!(confidence_gate(6.0, 7.5), Tier::Medium);
        assert_eq!(confidence_gate(5.9, 7.5), Tier::Low);
        assert_eq!(confidence_gate(4.6, 6.1), Tier::Medium);
        assert_eq!(confidence_gate(5.0, 6.0), Tier::Medium);
    }

    #[test]
    fn policy_validation() {
        assert!(AcceptancePolicy::new([0.5, 0.5, 0.0, 0.0, 0.0], 7.5, [6.0; 5]).is_ok());
        assert!(AcceptancePolicy::new([0.5; 5], 7.5, [6.0; 5]).is_err());
        assert!(AcceptancePolicy::new([0.2; 5], 0.0, [6.0; 5]).is_err());
        assert!(AcceptancePolicy::new([0.2; 5], 7.5, [11.0; 5]).is_err());
    }
}
