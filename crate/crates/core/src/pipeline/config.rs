//! `harness.toml`: backend, acceptance policy, feature flags and runtime
//! limits.

use serde::{Deserialize, Serialize};

use super::definition::FeatureFlags;
use super::PipelineError;
use crate::backend::RemoteConfig;
use crate::provenance::DEFAULT_SIZE_GATE_BYTES;
use crate::review::AcceptancePolicy;

pub const CONFIG_FILE: &str = "harness.toml";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    /// Script path, relative to the corpus directory.
    Mock { script: String },
    Remote(RemoteConfig),
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Mock {
            script: "mock/script.txt".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    /// Downloads above this size need a data-access decision.
    pub size_threshold_bytes: u64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            size_threshold_bytes: DEFAULT_SIZE_GATE_BYTES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeConfig {
    /// Single writes above this many bytes go through the chunked path.
    pub max_write_bytes: u64,
    pub chunk_bytes: u64,
    pub retry_backoff_ms: u64,
    /// Run-wide token allowance reported in the handoff.
    pub token_budget: u64,
    /// Executable run with each notification's JSON on stdin.
    pub notify_hook: Option<String>,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            max_write_bytes: 256 * 1024,
            chunk_bytes: 64 * 1024,
            retry_backoff_ms: 500,
            token_budget: 2_000_000,
            notify_hook: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub backend: BackendConfig,
    pub policy: AcceptancePolicy,
    /// Overrides the definition's flags when present.
    pub feature_flags: Option<FeatureFlags>,
    pub gates: GateConfig,
    pub runtime: RuntimeConfig,
    /// Passed through to the submission stage as metadata.
    pub venue_template: Option<String>,
}

impl HarnessConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let config: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        config
            .policy
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if config.runtime.chunk_bytes == 0 {
            return Err(PipelineError::Config("runtime.chunk_bytes must be positive".into()));
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = HarnessConfig::from_toml("").unwrap();
        assert_eq!(c, HarnessConfig::default());
        let c = HarnessConfig::from_toml(
            r#"
venue_template = "agu-journal"
[backend]
kind = "remote"
endpoint = "http://127.0.0.1:9/complete"
credential_env = "REVIEWER_KEY"
[policy]
weights = [0.2, 0.2, 0.2, 0.2, 0.2]
threshold = 6.0
floors = [5.0, 5.0, 5.0, 5.0, 5.0]
[feature_flags]
separation_enforced = false
"#,
        )
        .unwrap();
        assert!(matches!(c.backend, BackendConfig::Remote(ref r) if r.timeout_secs == 120));
        assert_eq!(c.policy.threshold, 6.0);
        let flags = c.feature_flags.unwrap();
        assert!(flags.hooks_enabled && !flags.separation_enforced);
    }

    #[test]
    fn bad_policy_refused() {
        assert!(HarnessConfig::from_toml("[policy]\nweights=[1,1,1,1,1]\nthreshold=7.5\nfloors=[6,6,6,6,6]").is_err());
        assert!(HarnessConfig::from_toml("[bogus]\nx=1").is_err());
    }
}
