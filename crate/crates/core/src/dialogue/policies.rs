use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};

use super::{claims_for, Diagnostician, EpisodeView, FeatureRequest, PolicyAction, PolicyFactory, PolicyFault, PolicyReply};
use crate::domain::{FeatureId, FeatureValue, FeatureValues, TurnRequest};
use crate::dtree::{DecisionTree, Node, NodeId};

/// Reasoning marker for a deliberately wrong comparison.
pub const FLIP_MARKER: &str = "[injected comparison flip]";

fn reply_for(tree: &DecisionTree, at: NodeId, reasoning: String) -> PolicyReply {
    let (action, raw) = match tree.node(at) {
        Node::Leaf(d) => (PolicyAction::FinalDiagnosis(*d), format!("DIAGNOSIS: {}", d.display_name())),
        Node::Test { feature, .. } => {
            (PolicyAction::RequestFeature(FeatureRequest::Known(*feature)), format!("REQUEST: {}", feature.display_name()))
        }
    };
    let reasoning = (!reasoning.is_empty()).then_some(reasoning);
    let raw = match &reasoning {
        Some(r) => format!("{r}\n{raw}"),
        None => raw,
    };
    PolicyReply { action, raw, reasoning }
}

pub(crate) fn claim_text(feature: FeatureId, value: &FeatureValue, tree: &DecisionTree, node: NodeId, branch: usize) -> String {
    match value.as_number() {
        Some(x) => {
            claims_for(feature, x, &tree.branches(node)[branch].condition).iter().map(|c| c.line()).collect::<Vec<_>>().join("\n")
        }
        None => match value {
            FeatureValue::Unavailable => format!("{} is unavailable.", feature.display_name()),
            other => format!("{} is {}.", feature.display_name(), other.value_text()),
        },
    }
}

/// Follows the tree exactly, replaying the walk from the episode history.
#[derive(Debug, Clone)]
pub struct TreePolicy {
    tree: Arc<DecisionTree>,
}

impl TreePolicy {
    pub fn new(tree: Arc<DecisionTree>) -> Self {
        TreePolicy { tree }
    }
}

impl Diagnostician for TreePolicy {
    fn name(&self) -> &str {
        "tree"
    }

    fn next_action(&mut self, view: &EpisodeView<'_>) -> Result<PolicyReply, PolicyFault> {
        let tree = &*self.tree;
        let mut at = tree.root();
        let mut reasoning = String::new();
        for turn in view.turns {
            let (TurnRequest::Feature(f), Some(v)) = (&turn.request, &turn.provided) else {
                continue;
            };
            if tree.feature_of(at) != Some(*f) {
                continue;
            }
            let b = tree.select_branch(at, v);
            reasoning = claim_text(*f, v, tree, at, b);
            at = tree.branches(at)[b].target;
        }
        Ok(reply_for(tree, at, reasoning))
    }
}

pub struct TreePolicyFactory(pub Arc<DecisionTree>);

impl PolicyFactory for TreePolicyFactory {
    fn name(&self) -> String {
        "tree".into()
    }

    fn build(&self, _patient_id: &str, _values: &FeatureValues) -> Box<dyn Diagnostician> {
        Box::new(TreePolicy::new(self.0.clone()))
    }
}

/// Tree follower that, at each numeric comparison, takes a neighbouring
/// numeric branch with probability `rate`.
pub struct NoisyPolicy {
    tree: Arc<DecisionTree>,
    rate: f64,
    rng: ChaCha8Rng,
    at: NodeId,
    seen_turns: usize,
    pending: String,
}

/// Stable 64-bit stream id for a patient.
pub fn patient_stream(patient_id: &str) -> u64 {
    let h = Sha256::digest(patient_id.as_bytes());
    u64::from_le_bytes(h[..8].try_into().unwrap())
}

impl NoisyPolicy {
    pub fn new(tree: Arc<DecisionTree>, rate: f64, seed: u64, patient_id: &str) -> Self {
        assert!((0.0..=1.0).contains(&rate), "rate must lie in [0, 1]");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(patient_stream(patient_id));
        let at = tree.root();
        NoisyPolicy { tree, rate, rng, at, seen_turns: 0, pending: String::new() }
    }

    fn unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn neighbour(&mut self, node: NodeId, taken: usize) -> Option<usize> {
        let options = numeric_neighbours(&self.tree, node, taken);
        match options.len() {
            0 => None,
            1 => Some(options[0]),
            _ => Some(options[(self.rng.next_u64() % 2) as usize]),
        }
    }
}

/// Numeric branches adjacent to `taken` when ordered by lower bound.
pub(crate) fn numeric_neighbours(tree: &DecisionTree, node: NodeId, taken: usize) -> Vec<usize> {
    let mut numeric: Vec<(usize, f64)> =
        tree.branches(node).iter().enumerate().filter_map(|(i, b)| b.condition.interval().map(|iv| (i, iv.lo))).collect();
    numeric.sort_by(|a, b| a.1.total_cmp(&b.1));
    let Some(pos) = numeric.iter().position(|(i, _)| *i == taken) else {
        return Vec::new();
    };
    let mut options = Vec::new();
    if pos > 0 {
        options.push(numeric[pos - 1].0);
    }
    if pos + 1 < numeric.len() {
        options.push(numeric[pos + 1].0);
    }
    options
}

impl Diagnostician for NoisyPolicy {
    fn name(&self) -> &str {
        "noisy"
    }

    fn next_action(&mut self, view: &EpisodeView<'_>) -> Result<PolicyReply, PolicyFault> {
        let tree = self.tree.clone();
        for turn in &view.turns[self.seen_turns.min(view.turns.len())..] {
            let (TurnRequest::Feature(f), Some(v)) = (&turn.request, &turn.provided) else {
                continue;
            };
            if tree.feature_of(self.at) != Some(*f) {
                continue;
            }
            let truth = tree.select_branch(self.at, v);
            let mut taken = truth;
            let mut flipped = false;
            let numeric = v.as_number().is_some() && tree.branches(self.at)[truth].condition.is_numeric();
            if numeric && self.unit() < self.rate {
                if let Some(n) = self.neighbour(self.at, truth) {
                    taken = n;
                    flipped = true;
                }
            }
            let mut text = claim_text(*f, v, &tree, self.at, taken);
            if flipped {
                text = format!("{FLIP_MARKER}\n{text}");
            }
            self.pending = text;
            self.at = tree.branches(self.at)[taken].target;
        }
        self.seen_turns = view.turns.len();
        Ok(reply_for(&tree, self.at, std::mem::take(&mut self.pending)))
    }
}

pub struct NoisyPolicyFactory {
    pub tree: Arc<DecisionTree>,
    pub rate: f64,
    pub seed: u64,
}

impl PolicyFactory for NoisyPolicyFactory {
    fn name(&self) -> String {
        "noisy".into()
    }

    fn build(&self, patient_id: &str, _values: &FeatureValues) -> Box<dyn Diagnostician> {
        Box::new(NoisyPolicy::new(self.tree.clone(), self.rate, self.seed, patient_id))
    }
}
