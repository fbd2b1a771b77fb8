use std::sync::Arc;

use super::client::{ChatClient, GatewayError};
use super::parse::parse_reply;
use super::prompt::{build_plain_prompt, build_sequential_system_prompt, Mode, PromptConfig, SEQUENTIAL_OPENER};
use super::wire::{ChatMessage, ChatRequest};
use crate::dialogue::{Diagnostician, EpisodeView, PolicyAction, PolicyFactory, PolicyFault, PolicyReply};
use crate::domain::FeatureValues;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub model: String,
    pub temperature: f64,
    pub seed: Option<u64>,
}

/// A chat model as diagnostician. The whole conversation is resent on
/// every turn.
pub struct LlmPolicy {
    name: String,
    client: Arc<ChatClient>,
    params: ModelParams,
    mode: Mode,
    opening: Vec<ChatMessage>,
}

impl LlmPolicy {
    pub fn new(
        name: impl Into<String>,
        client: Arc<ChatClient>,
        params: ModelParams,
        mode: Mode,
        opening: Vec<ChatMessage>,
    ) -> Self {
        LlmPolicy { name: name.into(), client, params, mode, opening }
    }

    /// Messages that would be sent for the next action.
    pub fn messages(&self, view: &EpisodeView<'_>) -> Vec<ChatMessage> {
        let mut messages = self.opening.clone();
        for turn in view.turns {
            messages.push(ChatMessage::assistant(turn.raw.clone()));
            if let Some(r) = &turn.response {
                messages.push(ChatMessage::user(r.clone()));
            }
        }
        messages
    }
}

impl Diagnostician for LlmPolicy {
    fn name(&self) -> &str {
        &self.name
    }

    fn next_action(&mut self, view: &EpisodeView<'_>) -> Result<PolicyReply, PolicyFault> {
        let request = ChatRequest {
            model: self.params.model.clone(),
            messages: self.messages(view),
            temperature: self.params.temperature,
            seed: self.params.seed,
        };
        match self.client.complete(&request) {
            Ok(raw) => {
                let parsed = parse_reply(&raw, self.mode);
                Ok(PolicyReply { action: parsed.action, raw, reasoning: parsed.reasoning })
            }
            Err(GatewayError::Auth(m)) => Err(PolicyFault::Auth(m)),
            Err(GatewayError::Quota(m)) => Err(PolicyFault::Quota(m)),
            Err(e) => Ok(PolicyReply { action: PolicyAction::Malformed, raw: String::new(), reasoning: Some(e.to_string()) }),
        }
    }
}

pub struct LlmPolicyFactory {
    pub name: String,
    pub client: Arc<ChatClient>,
    pub params: ModelParams,
    pub prompt: PromptConfig,
    system_prompt: String,
}

impl LlmPolicyFactory {
    pub fn new(name: impl Into<String>, client: Arc<ChatClient>, params: ModelParams, prompt: PromptConfig) -> Self {
        let system_prompt = build_sequential_system_prompt(&prompt);
        LlmPolicyFactory { name: name.into(), client, params, prompt, system_prompt }
    }
}

impl PolicyFactory for LlmPolicyFactory {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn build(&self, _patient_id: &str, values: &FeatureValues) -> Box<dyn Diagnostician> {
        let opening = match self.prompt.mode {
            Mode::Sequential => vec![ChatMessage::system(self.system_prompt.clone()), ChatMessage::user(SEQUENTIAL_OPENER)],
            Mode::Plain => vec![ChatMessage::user(build_plain_prompt(&self.prompt, values))],
        };
        Box::new(LlmPolicy::new(self.name.clone(), self.client.clone(), self.params.clone(), self.prompt.mode, opening))
    }
}
