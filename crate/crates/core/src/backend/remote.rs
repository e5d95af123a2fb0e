//! Generic HTTP completion client.
//!
//! Request: `POST <endpoint>` with JSON `{agent, payload, thread_id,
//! max_output_tokens}` and an optional bearer credential read from the
//! environment. Response: JSON `{text, input_tokens?, output_tokens?}`.
//! Missing token counts fall back to the local estimate.

use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{estimate_tokens, AgentBackend, AgentInvocation, AgentResult, BackendError, TokenUsage};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    /// Name of the environment variable holding the credential.
    #[serde(default)]
    pub credential_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    120
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    agent: &'a str,
    payload: &'a str,
    thread_id: &'a str,
    max_output_tokens: u64,
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
    #[serde(default)]
    input_tokens: Option<u64>,
    #[serde(default)]
    output_tokens: Option<u64>,
}

pub struct RemoteBackend {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    totals: Mutex<(TokenUsage, u64)>,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Unavailable {
                agent: String::new(),
                reason: e.to_string(),
            })?;
        Ok(Self {
            config,
            client,
            totals: Mutex::new((TokenUsage::default(), 0)),
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }
}

impl AgentBackend for RemoteBackend {
    fn invoke(&self, invocation: &AgentInvocation) -> Result<AgentResult, BackendError> {
        let unavailable = |reason: String| BackendError::Unavailable {
            agent: invocation.agent.clone(),
            reason,
        };
        let mut request = self.client.post(&self.config.endpoint).json(&CompletionRequest {
            agent: &invocation.agent,
            payload: &invocation.payload,
            thread_id: &invocation.thread_id,
            max_output_tokens: invocation.budget.output_max,
        });
        if let Some(var) = &self.config.credential_env {
            if let Ok(token) = std::env::var(var) {
                request = request.bearer_auth(token);
            }
        }
        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout {
                    agent: invocation.agent.clone(),
                }
            } else {
                unavailable(e.to_string())
            }
        })?;
        if !response.status().is_success() {
            return Err(unavailable(format!("HTTP {}", response.status())));
        }
        let body: CompletionResponse = response.json().map_err(|e| unavailable(e.to_string()))?;
        let tokens = TokenUsage {
            input: body.input_tokens.unwrap_or_else(|| estimate_tokens(&invocation.payload)),
            output: body.output_tokens.unwrap_or_else(|| estimate_tokens(&body.text)),
        };
        let mut totals = self.totals.lock().expect("totals poisoned");
        totals.0 += tokens;
        totals.1 += 1;
        Ok(AgentResult::from_raw(body.text, tokens))
    }

    fn usage(&self) -> TokenUsage {
        self.totals.lock().expect("totals poisoned").0
    }

    fn calls(&self) -> u64 {
        self.totals.lock().expect("totals poisoned").1
    }
}
