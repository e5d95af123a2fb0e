//! `pipeline.yaml`: stage to skill binding, gate attachments, feature flags
//! and the dataset plan.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::provenance::{AccessDescriptor, ExpectedProperties, SourceCandidate};
use crate::review::{FallbackChain, MAX_ROUNDS_REFINE};
use crate::stage::StageId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    IntakeInterview,
    IdeaSelection,
    DataAccessAuthorization,
    SyntheticDataApproval,
    ReviewRoundGuidance,
    BlockedStateResolution,
    NarrativeReportApproval,
    FigureRenderApproval,
    SubmissionConfirmation,
}

/// What a `reject` decision does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectRoute {
    /// Re-run the work that led to the gate and ask again.
    Loop,
    /// Stop the run.
    Halt,
}

impl GateKind {
    pub const ALL: [GateKind; 9] = [
        GateKind::IntakeInterview,
        GateKind::IdeaSelection,
        GateKind::DataAccessAuthorization,
        GateKind::SyntheticDataApproval,
        GateKind::ReviewRoundGuidance,
        GateKind::BlockedStateResolution,
        GateKind::NarrativeReportApproval,
        GateKind::FigureRenderApproval,
        GateKind::SubmissionConfirmation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GateKind::IntakeInterview => "intake_interview",
            GateKind::IdeaSelection => "idea_selection",
            GateKind::DataAccessAuthorization => "data_access_authorization",
            GateKind::SyntheticDataApproval => "synthetic_data_approval",
            GateKind::ReviewRoundGuidance => "review_round_guidance",
            GateKind::BlockedStateResolution => "blocked_state_resolution",
            GateKind::NarrativeReportApproval => "narrative_report_approval",
            GateKind::FigureRenderApproval => "figure_render_approval",
            GateKind::SubmissionConfirmation => "submission_confirmation",
        }
    }

    /// Selection and guidance gates loop on reject; authorization and
    /// confirmation gates halt.
    pub fn reject_route(self) -> RejectRoute {
        match self {
            GateKind::IntakeInterview | GateKind::IdeaSelection | GateKind::ReviewRoundGuidance => RejectRoute::Loop,
            _ => RejectRoute::Halt,
        }
    }

    /// Gates raised from inside a step rather than at a fixed position.
    pub fn is_conditional(self) -> bool {
        matches!(
            self,
            GateKind::DataAccessAuthorization
                | GateKind::SyntheticDataApproval
                | GateKind::ReviewRoundGuidance
                | GateKind::BlockedStateResolution
        )
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GateKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown gate kind `{s}`"))
    }
}

/// Where a gate sits. Positional gates name the step they follow or
/// precede; `stage: any` is only valid for blocked-state resolution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateAttachment {
    pub stage: StageRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub before: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StageRef {
    Stage(StageId),
    Any(AnyStage),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnyStage {
    Any,
}

impl StageRef {
    pub fn admits(self, stage: StageId) -> bool {
        match self {
            StageRef::Stage(s) => s == stage,
            StageRef::Any(_) => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureFlags {
    /// Pre-tool policy gate and stop-hook flush.
    pub hooks_enabled: bool,
    /// Generator never scores its own output.
    pub separation_enforced: bool,
    /// Dataset ranking, access gates, validation and manifest records.
    pub manifest_enforced: bool,
}

impl Default for FeatureFlags {
    fn default() -> Self {
        Self {
            hooks_enabled: true,
            separation_enforced: true,
            manifest_enforced: true,
        }
    }
}

/// A review loop attached to a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewBinding {
    /// Canonical path of the artifact under review.
    pub artifact: String,
    pub generator: String,
    pub chain: FallbackChain,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: u32,
}

fn default_max_rounds() -> u32 {
    MAX_ROUNDS_REFINE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSpec {
    pub skill: String,
    /// Agent that executes the skill's phases.
    pub agent: String,
    /// Local alternative used when `agent` is unavailable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_agent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub review: Option<ReviewBinding>,
    /// This step acquires the datasets in the plan.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub acquires_data: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageBinding {
    pub stage: StageId,
    pub steps: Vec<StepSpec>,
    /// Optional dispatch groups, checked against the dependency graph.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dispatch: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetPlan {
    pub id: String,
    /// Store path the file should land at.
    pub path: String,
    pub source_name: String,
    pub url: String,
    pub tier: u8,
    #[serde(default)]
    pub access: AccessDescriptor,
    #[serde(default)]
    pub size_bytes: u64,
    #[serde(default)]
    pub license: String,
    #[serde(default)]
    pub variables: Vec<String>,
    #[serde(default)]
    pub expected: ExpectedProperties,
    /// Alternatives to rank; the best one supplies the source fields.
    #[serde(default)]
    pub candidates: Vec<SourceCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineDefinition {
    pub stages: Vec<StageBinding>,
    pub gates: BTreeMap<GateKind, GateAttachment>,
    #[serde(default)]
    pub feature_flags: FeatureFlags,
    #[serde(default)]
    pub datasets: Vec<DatasetPlan>,
}

/// A step with its position in the flattened plan.
#[derive(Debug, Clone, Copy)]
pub struct PlannedStep<'a> {
    pub index: usize,
    pub stage: StageId,
    pub spec: &'a StepSpec,
}

impl PipelineDefinition {
    pub fn from_yaml(text: &str) -> Result<Self, PipelineError> {
        let def: Self = serde_yaml::from_str(text).map_err(|e| PipelineError::Definition(e.to_string()))?;
        def.validate()?;
        Ok(def)
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("definition serializes")
    }

    /// Stage order, gate coverage and step uniqueness.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Definition(m));
        let stages: Vec<StageId> = self.stages.iter().map(|b| b.stage).collect();
        if stages != StageId::ALL {
            return bad(format!("stages must be the nine stages in order, found {stages:?}"));
        }
        let mut seen = BTreeSet::new();
        for step in self.stages.iter().flat_map(|b| &b.steps) {
            if !seen.insert(step.skill.as_str()) {
                return bad(format!("skill `{}` appears in more than one step", step.skill));
            }
        }
        for kind in GateKind::ALL {
            let Some(att) = self.gates.get(&kind) else {
                return bad(format!("gate `{kind}` has no attachment"));
            };
            if matches!(att.stage, StageRef::Any(_)) != (kind == GateKind::BlockedStateResolution) {
                return bad(format!("gate `{kind}` has an invalid `any` attachment"));
            }
            match (&att.after, &att.before) {
                (Some(_), Some(_)) => return bad(format!("gate `{kind}` sets both `after` and `before`")),
                (None, None) if !kind.is_conditional() => {
                    return bad(format!("gate `{kind}` needs `after` or `before`"))
                }
                (Some(_), None) | (None, Some(_)) if kind.is_conditional() => {
                    return bad(format!("gate `{kind}` is raised from inside a step and takes no position"))
                }
                _ => {}
            }
            if let Some(skill) = att.after.as_ref().or(att.before.as_ref()) {
                let StageRef::Stage(stage) = att.stage else { unreachable!("checked above") };
                let binding = &self.stages[stage.index()];
                if !binding.steps.iter().any(|s| &s.skill == skill) {
                    return bad(format!("gate `{kind}` names `{skill}`, which is not a step of {stage}"));
                }
            }
        }
        let data_stage = self.gates[&GateKind::DataAccessAuthorization].stage;
        for plan in self.steps() {
            if plan.spec.acquires_data
                && !(data_stage.admits(plan.stage) && self.gates[&GateKind::SyntheticDataApproval].stage.admits(plan.stage))
            {
                return bad(format!("data step `{}` is outside the data gates' stage", plan.spec.skill));
            }
            if plan.spec.review.is_some() && plan.spec.acquires_data {
                return bad(format!("step `{}` cannot both review and acquire data", plan.spec.skill));
            }
        }
        let mut ids = BTreeSet::new();
        for d in &self.datasets {
            if !ids.insert(d.id.as_str()) {
                return bad(format!("dataset `{}` planned twice", d.id));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> Vec<PlannedStep<'_>> {
        self.stages
            .iter()
            .flat_map(|b| b.steps.iter().map(move |s| (b.stage, s)))
            .enumerate()
            .map(|(index, (stage, spec))| PlannedStep { index, stage, spec })
            .collect()
    }

    pub fn step_index(&self, skill: &str) -> Option<usize> {
        self.steps().iter().position(|s| s.spec.skill == skill)
    }

    /// Positional gates waiting at plan position `index` (which may equal
    /// the number of steps, for a gate after the final step).
    pub fn gates_at(&self, index: usize) -> Vec<GateKind> {
        let steps = self.steps();
        GateKind::ALL
            .into_iter()
            .filter(|kind| {
                let att = &self.gates[kind];
                if let Some(after) = &att.after {
                    steps.iter().position(|s| &s.spec.skill == after).map(|i| i + 1) == Some(index)
                } else if let Some(before) = &att.before {
                    steps.iter().position(|s| &s.spec.skill == before) == Some(index)
                } else {
                    false
                }
            })
            .collect()
    }

    /// First plan position of `stage`, or the position after the last
    /// step when the stage is empty.
    pub fn stage_start(&self, stage: StageId) -> usize {
        self.stages[..stage.index()].iter().map(|b| b.steps.len()).sum()
    }
}
