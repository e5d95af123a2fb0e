//! The nine pipeline stages, in execution order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageId {
    Launch,
    IdeaDiscovery,
    DataAcquisition,
    ExperimentExecution,
    AdversarialReview,
    NarrativeReport,
    PaperWriting,
    ReviewRevise,
    Submission,
}

impl StageId {
    pub const ALL: [StageId; 9] = [
        StageId::Launch,
        StageId::IdeaDiscovery,
        StageId::DataAcquisition,
        StageId::ExperimentExecution,
        StageId::AdversarialReview,
        StageId::NarrativeReport,
        StageId::PaperWriting,
        StageId::ReviewRevise,
        StageId::Submission,
    ];

    /// Zero-based position in the fixed stage order.
    pub fn index(self) -> usize {
        Self::ALL.iter().position(|s| *s == self).expect("stage in ALL")
    }

    /// One-based stage number as shown to operators.
    pub fn number(self) -> usize {
        self.index() + 1
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StageId::Launch => "launch",
            StageId::IdeaDiscovery => "idea_discovery",
            StageId::DataAcquisition => "data_acquisition",
            StageId::ExperimentExecution => "experiment_execution",
            StageId::AdversarialReview => "adversarial_review",
            StageId::NarrativeReport => "narrative_report",
            StageId::PaperWriting => "paper_writing",
            StageId::ReviewRevise => "review_revise",
            StageId::Submission => "submission",
        }
    }
}

impl fmt::Display for StageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown stage `{0}`")]
pub struct UnknownStage(pub String);

impl FromStr for StageId {
    type Err = UnknownStage;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|stage| stage.as_str() == s)
            .ok_or_else(|| UnknownStage(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_and_names_round_trip() {
        for (i, stage) in StageId::ALL.iter().enumerate() {
            assert_eq!(stage.index(), i);
            assert_eq!(stage.as_str().parse::<StageId>().unwrap(), *stage);
        }
        assert!("peer_review".parse::<StageId>().is_err());
    }
}
