use serde::{Deserialize, Serialize};

use super::{Diagnosis, FeatureId, FeatureValue};

/// Why an episode ended without a diagnosis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    Unparseable,
    TurnLimit,
    RepeatLimit,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Diagnosis(Diagnosis),
    Failure(FailureReason),
}

/// Ordered feature requests ending in a diagnosis or a failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pathway {
    pub requests: Vec<FeatureId>,
    pub terminal: Terminal,
}

impl Pathway {
    pub fn new(requests: Vec<FeatureId>, terminal: Terminal) -> Self {
        Pathway { requests, terminal }
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    pub fn diagnosis(&self) -> Option<Diagnosis> {
        match self.terminal {
            Terminal::Diagnosis(d) => Some(d),
            Terminal::Failure(_) => None,
        }
    }
}

/// What the diagnostician did in one turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnRequest {
    Feature(FeatureId),
    /// A request naming something outside the feature vocabulary.
    UnknownFeature(String),
    Diagnosis(Diagnosis),
    Malformed,
}

/// Engine-side annotations on a turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnEvent {
    OffListRequest,
    RepeatRequest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub request: TurnRequest,
    /// Value handed back for a feature request.
    pub provided: Option<FeatureValue>,
    /// Text of the engine's reply to this turn, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    pub raw: String,
    pub reasoning: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<TurnEvent>,
}

/// Full record of one diagnosis dialogue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub patient_id: String,
    pub policy: String,
    pub turns: Vec<Turn>,
    pub outcome: Pathway,
    pub elapsed_ms: u64,
}

impl Transcript {
    /// Known-feature requests in turn order.
    pub fn requested_features(&self) -> Vec<FeatureId> {
        self.turns
            .iter()
            .filter_map(|t| match t.request {
                TurnRequest::Feature(f) => Some(f),
                _ => None,
            })
            .collect()
    }

    pub fn has_event(&self, event: TurnEvent) -> bool {
        self.turns.iter().any(|t| t.events.contains(&event))
    }

    /// Structural invariants: every request turn carries a provided value,
    /// the outcome matches the request projection, and only the last turn
    /// may be a diagnosis.
    pub fn check_well_formed(&self) -> Result<(), String> {
        for (i, t) in self.turns.iter().enumerate() {
            let is_request = matches!(t.request, TurnRequest::Feature(_) | TurnRequest::UnknownFeature(_));
            if is_request && t.provided.is_none() {
                return Err(format!("turn {i}: request without provided value"));
            }
            if !is_request && t.provided.is_some() {
                return Err(format!("turn {i}: value provided without a request"));
            }
            if matches!(t.request, TurnRequest::Diagnosis(_)) && i + 1 != self.turns.len() {
                return Err(format!("turn {i}: diagnosis before the final turn"));
            }
        }
        if self.requested_features() != self.outcome.requests {
            return Err("outcome requests differ from the recorded turns".into());
        }
        if let (Terminal::Diagnosis(d), Some(last)) = (self.outcome.terminal, self.turns.last()) {
            if last.request != TurnRequest::Diagnosis(d) {
                return Err("terminal diagnosis does not match the final turn".into());
            }
        }
        Ok(())
    }
}
