//! Chat-completion endpoints as diagnosticians: prompts, transport, reply
//! parsing and an offline mock.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

mod client;
mod mock;
mod parse;
mod policy;
mod prompt;
mod wire;

pub use client::{ChatClient, ChatTransport, GatewayError, HttpTransport, RateLimiter, RetryPolicy, TransportError};
pub use mock::{MockFault, MockLlm, MockServer, ServerFaults, CHATTER, NO_MARKER_TEXT};
pub use parse::{parse_reply, parse_reply_with, trailing_chatter, ParsedReply};
pub use policy::{LlmPolicy, LlmPolicyFactory, ModelParams};
pub use prompt::{
    build_plain_prompt, build_sequential_system_prompt, Mode, Persona, PromptConfig, COT_INSTRUCTION, SEQUENTIAL_OPENER,
};
pub use wire::{extract_content, ChatMessage, ChatRequest, ChatResponse, Choice};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: Option<String>,
    pub temperature: f64,
    pub seed: Option<u64>,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub requests_per_minute: Option<u32>,
    pub request_log_path: Option<PathBuf>,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model_name: "default".into(),
            api_key_env: None,
            temperature: 0.0,
            seed: None,
            timeout_secs: 60.0,
            max_retries: 3,
            backoff_ms: 500,
            requests_per_minute: None,
            request_log_path: None,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err("timeout must be positive".into());
        }
        if self.requests_per_minute == Some(0) {
            return Err("requests_per_minute must be positive".into());
        }
        if self.base_url.is_empty() {
            return Err("base_url is empty".into());
        }
        Ok(())
    }

    pub fn params(&self) -> ModelParams {
        ModelParams { model: self.model_name.clone(), temperature: self.temperature, seed: self.seed }
    }

    pub fn retry(&self) -> RetryPolicy {
        RetryPolicy { max_retries: self.max_retries, backoff: Duration::from_millis(self.backoff_ms), ..RetryPolicy::default() }
    }

    /// Client over HTTP, reading the token from the environment.
    pub fn connect(&self) -> Result<Arc<ChatClient>, GatewayError> {
        self.validate().map_err(GatewayError::Rejected)?;
        let key = match &self.api_key_env {
            Some(var) => {
                Some(std::env::var(var).map_err(|_| GatewayError::Auth(format!("environment variable {var} is not set")))?)
            }
            None => None,
        };
        let transport = HttpTransport::new(&self.base_url, key, Duration::from_secs_f64(self.timeout_secs));
        self.client_over(Box::new(transport))
    }

    /// Client over any transport with this config's retries, limit and log.
    pub fn client_over(&self, transport: Box<dyn ChatTransport>) -> Result<Arc<ChatClient>, GatewayError> {
        let mut client = ChatClient::new(transport, self.retry()).with_rate_limit(self.requests_per_minute);
        if let Some(p) = &self.request_log_path {
            client = client.with_log(p).map_err(|e| GatewayError::Rejected(format!("request log {}: {e}", p.display())))?;
        }
        Ok(Arc::new(client))
    }
}
