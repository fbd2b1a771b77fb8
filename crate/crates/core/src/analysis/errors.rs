use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dialogue::parse_claims;
use crate::domain::{FailureReason, FeatureId, PatientRecord, Terminal, Transcript, TurnEvent, TurnRequest};
use crate::dtree::DecisionTree;
use crate::gateway::trailing_chatter;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    ComparisonError,
    RuleDeviation,
    OffListRequest,
    PostDiagnosisChatter,
    ValueRejection,
    #[serde(rename = "missing_cot")]
    MissingCoT,
    Unparseable,
    TurnLimit,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 8] = [
        ErrorKind::ComparisonError,
        ErrorKind::RuleDeviation,
        ErrorKind::OffListRequest,
        ErrorKind::PostDiagnosisChatter,
        ErrorKind::ValueRejection,
        ErrorKind::MissingCoT,
        ErrorKind::Unparseable,
        ErrorKind::TurnLimit,
    ];
}

fn rejection_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)(not (look |seem )?plausible|implausible|cannot rely|can't rely|do not trust|don't trust|cannot accept|can't accept|not accept|seems? (wrong|incorrect|erroneous)|unrealistic|likely an? (error|typo))",
        )
        .unwrap()
    })
}

/// Kinds of deviation present in one episode, whatever its outcome.
pub fn episode_errors(t: &Transcript, patient: &PatientRecord, tree: &DecisionTree, cot_expected: bool) -> Vec<ErrorKind> {
    let mut kinds = Vec::new();

    let comparison = t.turns.iter().any(|turn| {
        let text = turn.reasoning.as_deref().unwrap_or(&turn.raw);
        parse_claims(text).iter().any(|c| patient.value(c.feature).as_number().is_some_and(|actual| !c.holds_for(actual)))
    });
    if comparison {
        kinds.push(ErrorKind::ComparisonError);
    }

    // Requests compared with the tree walk, ignoring repeats and off-list asks,
    // which have their own kinds.
    let allowed: HashSet<FeatureId> = tree.features().into_iter().collect();
    let mut seen = HashSet::new();
    let cleaned: Vec<FeatureId> = t.outcome.requests.iter().copied().filter(|f| allowed.contains(f) && seen.insert(*f)).collect();
    let (oracle_d, oracle) = tree.evaluate(patient);
    let departs = match t.outcome.terminal {
        Terminal::Diagnosis(d) => cleaned != oracle.requests || d != oracle_d,
        Terminal::Failure(_) => !oracle.requests.starts_with(&cleaned),
    };
    if departs && !comparison {
        kinds.push(ErrorKind::RuleDeviation);
    }

    if t.has_event(TurnEvent::OffListRequest) {
        kinds.push(ErrorKind::OffListRequest);
    }
    let chatter =
        t.turns.iter().any(|turn| matches!(turn.request, TurnRequest::Diagnosis(_)) && trailing_chatter(&turn.raw).is_some());
    if chatter {
        kinds.push(ErrorKind::PostDiagnosisChatter);
    }
    if t.turns.iter().any(|turn| rejection_re().is_match(&turn.raw)) {
        kinds.push(ErrorKind::ValueRejection);
    }
    if cot_expected
        && !t.turns.is_empty()
        && t.turns.iter().all(|turn| turn.reasoning.as_deref().map_or(true, |r| r.trim().is_empty()))
    {
        kinds.push(ErrorKind::MissingCoT);
    }
    match t.outcome.terminal {
        Terminal::Failure(FailureReason::Unparseable) => kinds.push(ErrorKind::Unparseable),
        Terminal::Failure(FailureReason::TurnLimit | FailureReason::RepeatLimit) => kinds.push(ErrorKind::TurnLimit),
        _ => {}
    }
    kinds
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTaxonomy {
    /// Episodes showing each kind, over all episodes.
    pub counts: BTreeMap<ErrorKind, usize>,
    /// The same restricted to misdiagnosed episodes.
    pub misdiagnosed: BTreeMap<ErrorKind, usize>,
    pub n_misdiagnosed: usize,
    /// Kinds per episode, for episodes with at least one.
    pub episodes: Vec<(String, Vec<ErrorKind>)>,
}

fn zeroed() -> BTreeMap<ErrorKind, usize> {
    ErrorKind::ALL.iter().map(|k| (*k, 0)).collect()
}

/// Error kinds over a run. Transcripts are matched to patients by id.
pub fn classify_errors(
    transcripts: &[Transcript],
    patients: &[PatientRecord],
    tree: &DecisionTree,
    cot_expected: bool,
) -> Result<ErrorTaxonomy, String> {
    let by_id: HashMap<&str, &PatientRecord> = patients.iter().map(|p| (p.patient_id.as_str(), p)).collect();
    let mut tax = ErrorTaxonomy { counts: zeroed(), misdiagnosed: zeroed(), n_misdiagnosed: 0, episodes: Vec::new() };
    for t in transcripts {
        let p = by_id.get(t.patient_id.as_str()).ok_or_else(|| format!("no patient record for {}", t.patient_id))?;
        let kinds = episode_errors(t, p, tree, cot_expected);
        let wrong = t.outcome.diagnosis() != Some(p.gold_label);
        if wrong {
            tax.n_misdiagnosed += 1;
        }
        for k in &kinds {
            *tax.counts.get_mut(k).unwrap() += 1;
            if wrong {
                *tax.misdiagnosed.get_mut(k).unwrap() += 1;
            }
        }
        if !kinds.is_empty() {
            tax.episodes.push((t.patient_id.clone(), kinds));
        }
    }
    Ok(tax)
}
