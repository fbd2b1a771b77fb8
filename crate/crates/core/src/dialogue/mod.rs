//! Turn-based diagnosis episodes: a policy requests one feature per turn,
//! the engine answers from a feature source, and the episode ends with a
//! diagnosis or a failure.

mod batch;
mod claims;
mod policies;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    Diagnosis, FailureReason, FeatureId, FeatureValue, FeatureValues, Pathway, PatientRecord, Terminal, Transcript, Turn,
    TurnEvent, TurnRequest,
};

pub use batch::{run_batch, BatchOutcome, PolicyFactory};
pub use claims::{claims_for, parse_claims, Claim};
pub(crate) use policies::{claim_text, numeric_neighbours};
pub use policies::{patient_stream, NoisyPolicy, NoisyPolicyFactory, TreePolicy, TreePolicyFactory, FLIP_MARKER};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureRequest {
    Known(FeatureId),
    /// A name outside the feature vocabulary.
    Unknown(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicyAction {
    RequestFeature(FeatureRequest),
    FinalDiagnosis(Diagnosis),
    Malformed,
}

/// One policy turn: the parsed action plus the text it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyReply {
    pub action: PolicyAction,
    pub raw: String,
    pub reasoning: Option<String>,
}

impl PolicyReply {
    pub fn new(action: PolicyAction, raw: impl Into<String>) -> Self {
        PolicyReply { action, raw: raw.into(), reasoning: None }
    }
}

/// Failures that must stop the whole batch, not just the episode.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyFault {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("quota exhausted: {0}")]
    Quota(String),
    #[error("policy failure: {0}")]
    Other(String),
}

/// What a policy may see: the patient id, the turns so far and the episode
/// limits. Never the gold label.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeView<'a> {
    pub patient_id: &'a str,
    pub turns: &'a [Turn],
    pub allowed_features: &'a [FeatureId],
    pub max_turns: usize,
}

pub trait Diagnostician: Send {
    fn name(&self) -> &str;
    fn next_action(&mut self, view: &EpisodeView<'_>) -> Result<PolicyReply, PolicyFault>;
}

/// Supplies requested values; `None` means the source closed.
pub trait FeatureSource {
    fn provide(&mut self, feature: FeatureId) -> Option<FeatureValue>;
}

pub struct RecordSource<'a>(pub &'a FeatureValues);

impl FeatureSource for RecordSource<'_> {
    fn provide(&mut self, feature: FeatureId) -> Option<FeatureValue> {
        Some(self.0.get(feature).clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RepeatPolicy {
    #[default]
    Allow,
    /// Answer, with a note that the feature was already given.
    Warn,
    /// End with a repeat-limit failure once more than `k` repeats occurred.
    TerminateAfter(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub max_turns: usize,
    pub repeat_policy: RepeatPolicy,
    pub malformed_retries: usize,
    pub allowed_features: Vec<FeatureId>,
}

impl EpisodeConfig {
    pub fn new(allowed_features: Vec<FeatureId>) -> Self {
        EpisodeConfig { max_turns: 20, repeat_policy: RepeatPolicy::Allow, malformed_retries: 1, allowed_features }
    }

    pub fn for_tree(tree: &crate::dtree::DecisionTree) -> Self {
        EpisodeConfig::new(tree.features())
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.max_turns == 0 {
            return Err("max_turns must be at least 1".into());
        }
        Ok(())
    }
}

pub const MALFORMED_REMINDER: &str =
    "Your reply could not be understood. End your reply with exactly one line `REQUEST: <feature>` or `DIAGNOSIS: <class>`.";
pub const FINAL_CHANCE: &str = "You have reached the maximum number of requests. Reply with your final diagnosis now.";

/// The failed episode's partial record and the fault that stopped it.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("episode for {} aborted: {fault}", partial.patient_id)]
pub struct EpisodeAbort {
    pub fault: PolicyFault,
    pub partial: Transcript,
}

/// Run one episode against a patient record.
#[allow(clippy::result_large_err)]
pub fn run_episode(
    patient: &PatientRecord,
    policy: &mut dyn Diagnostician,
    config: &EpisodeConfig,
) -> Result<Transcript, EpisodeAbort> {
    run_episode_with(&patient.patient_id, &mut RecordSource(&patient.values), policy, config)
}

/// Run one episode answering requests from `source`.
#[allow(clippy::result_large_err)]
pub fn run_episode_with(
    patient_id: &str,
    source: &mut dyn FeatureSource,
    policy: &mut dyn Diagnostician,
    config: &EpisodeConfig,
) -> Result<Transcript, EpisodeAbort> {
    let started = Instant::now();
    let mut turns: Vec<Turn> = Vec::new();
    let mut requested: Vec<FeatureId> = Vec::new();
    let mut malformed_run = 0usize;
    let mut request_count = 0usize;
    let mut repeats = 0usize;

    let terminal = loop {
        let view =
            EpisodeView { patient_id, turns: &turns, allowed_features: &config.allowed_features, max_turns: config.max_turns };
        let reply = match policy.next_action(&view) {
            Ok(r) => r,
            Err(fault) => {
                let partial =
                    finish(patient_id, policy.name(), turns, requested, Terminal::Failure(FailureReason::Aborted), started);
                return Err(EpisodeAbort { fault, partial });
            }
        };
        let PolicyReply { action, raw, reasoning } = reply;
        let request = match action {
            PolicyAction::FinalDiagnosis(d) => {
                turns.push(Turn {
                    request: TurnRequest::Diagnosis(d),
                    provided: None,
                    response: None,
                    raw,
                    reasoning,
                    events: vec![],
                });
                break Terminal::Diagnosis(d);
            }
            PolicyAction::Malformed => {
                malformed_run += 1;
                if malformed_run > config.malformed_retries {
                    turns.push(Turn {
                        request: TurnRequest::Malformed,
                        provided: None,
                        response: None,
                        raw,
                        reasoning,
                        events: vec![],
                    });
                    break Terminal::Failure(FailureReason::Unparseable);
                }
                turns.push(Turn {
                    request: TurnRequest::Malformed,
                    provided: None,
                    response: Some(MALFORMED_REMINDER.to_string()),
                    raw,
                    reasoning,
                    events: vec![],
                });
                continue;
            }
            PolicyAction::RequestFeature(r) => r,
        };
        malformed_run = 0;
        if request_count == config.max_turns {
            break Terminal::Failure(FailureReason::TurnLimit);
        }
        request_count += 1;

        let mut events = Vec::new();
        let (turn_request, value, mut response) = match request {
            FeatureRequest::Known(f) if config.allowed_features.contains(&f) => {
                let Some(v) = source.provide(f) else {
                    break Terminal::Failure(FailureReason::Aborted);
                };
                let text = v.render(f);
                (TurnRequest::Feature(f), v, text)
            }
            FeatureRequest::Known(f) => {
                events.push(TurnEvent::OffListRequest);
                (TurnRequest::Feature(f), FeatureValue::Unavailable, FeatureValue::Unavailable.render(f))
            }
            FeatureRequest::Unknown(name) => {
                events.push(TurnEvent::OffListRequest);
                let text = format!("{name}: unavailable");
                (TurnRequest::UnknownFeature(name), FeatureValue::Unavailable, text)
            }
        };
        let mut stop = None;
        if let TurnRequest::Feature(f) = turn_request {
            if requested.contains(&f) {
                events.push(TurnEvent::RepeatRequest);
                repeats += 1;
                match config.repeat_policy {
                    RepeatPolicy::Allow => {}
                    RepeatPolicy::Warn => response.push_str(&format!("\nNote: {} was already provided.", f.display_name())),
                    RepeatPolicy::TerminateAfter(k) if repeats > k => stop = Some(Terminal::Failure(FailureReason::RepeatLimit)),
                    RepeatPolicy::TerminateAfter(_) => {}
                }
            }
            requested.push(f);
        }
        if request_count == config.max_turns && stop.is_none() {
            response.push('\n');
            response.push_str(FINAL_CHANCE);
        }
        turns.push(Turn { request: turn_request, provided: Some(value), response: Some(response), raw, reasoning, events });
        if let Some(t) = stop {
            break t;
        }
    };
    Ok(finish(patient_id, policy.name(), turns, requested, terminal, started))
}

fn finish(
    patient_id: &str,
    policy: &str,
    turns: Vec<Turn>,
    requested: Vec<FeatureId>,
    terminal: Terminal,
    started: Instant,
) -> Transcript {
    Transcript {
        patient_id: patient_id.to_string(),
        policy: policy.to_string(),
        turns,
        outcome: Pathway::new(requested, terminal),
        elapsed_ms: started.elapsed().as_millis() as u64,
    }
}

#[cfg(test)]
mod tests;
