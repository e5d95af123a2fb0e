//! Reviewer fallback chains annotated with output quality.

use serde::{Deserialize, Serialize};

use super::{ReviewError, Tier};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Reviewer {
    pub id: String,
    pub quality: Tier,
}

impl Reviewer {
    pub fn new(id: &str, quality: Tier) -> Self {
        Self {
            id: id.to_string(),
            quality,
        }
    }
}

/// Nonempty, with quality never rising along the chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FallbackChain {
    reviewers: Vec<Reviewer>,
}

impl FallbackChain {
    pub fn new(reviewers: Vec<Reviewer>) -> Result<Self, ReviewError> {
        if reviewers.is_empty() {
            return Err(ReviewError::InvalidChain("chain is empty".into()));
        }
        // Tier orders HIGH < MEDIUM < LOW, so quality nonincreasing means
        // the tier is nondecreasing.
        if let Some(pair) = reviewers.windows(2).find(|w| w[1].quality < w[0].quality) {
            return Err(ReviewError::InvalidChain(format!(
                "`{}` ({}) follows `{}` ({})",
                pair[1].id, pair[1].quality, pair[0].id, pair[0].quality
            )));
        }
        Ok(Self { reviewers })
    }

    pub fn single(id: &str) -> Self {
        Self {
            reviewers: vec![Reviewer::new(id, Tier::High)],
        }
    }

    pub fn reviewers(&self) -> &[Reviewer] {
        &self.reviewers
    }

    pub fn len(&self) -> usize {
        self.reviewers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reviewers.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.reviewers.iter().any(|r| r.id == id)
    }
}

impl<'de> Deserialize<'de> for FallbackChain {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            reviewers: Vec<Reviewer>,
        }
        let repr = Repr::deserialize(deserializer)?;
        FallbackChain::new(repr.reviewers).map_err(serde::de::Error::custom)
    }
}

/// The reviewer to use after `failures` failed attempts.
pub fn next_reviewer(chain: &FallbackChain, failures: usize) -> Result<&Reviewer, ReviewError> {
    chain
        .reviewers
        .get(failures)
        .ok_or(ReviewError::ChainExhausted { len: chain.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> FallbackChain {
        FallbackChain::new(vec![
            Reviewer::new("primary", Tier::High),
            Reviewer::new("local", Tier::Medium),
            Reviewer::new("self", Tier::Low),
        ])
        .unwrap()
    }

    #[test]
    fn positions() {
        let c = chain();
        assert_eq!(next_reviewer(&c, 0).unwrap().id, "primary");
        assert_eq!(next_reviewer(&c, 1).unwrap(), &Reviewer::new("local", Tier::Medium));
        assert!(matches!(next_reviewer(&c, 3), Err(ReviewError::ChainExhausted { len: 3 })));
    }

    #[test]
    fn quality_may_not_rise() {
        assert!(FallbackChain::new(vec![Reviewer::new("a", Tier::Low), Reviewer::new("b", Tier::High)]).is_err());
        assert!(FallbackChain::new(vec![]).is_err());
        assert!(FallbackChain::new(vec![Reviewer::new("a", Tier::Medium), Reviewer::new("b", Tier::Medium)]).is_ok());
    }
}
