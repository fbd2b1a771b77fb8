use std::sync::Arc;

use super::*;
use crate::dtree::{load_tree, DecisionTree, DEFAULT_TREE_TOML};
use crate::synth::{generate, SynthConfig};

fn tree() -> Arc<DecisionTree> {
    Arc::new(load_tree(DEFAULT_TREE_TOML).unwrap())
}

fn patients(t: &DecisionTree, n: usize) -> Vec<PatientRecord> {
    generate(t, &SynthConfig { n_patients: n, seed: 11, ..SynthConfig::default() }).unwrap().patients
}

/// Replays a fixed list of replies, then repeats the last one.
struct Scripted {
    replies: Vec<PolicyReply>,
    at: usize,
}

impl Scripted {
    fn new(actions: Vec<PolicyAction>) -> Self {
        Scripted { replies: actions.into_iter().map(|a| PolicyReply::new(a, "")).collect(), at: 0 }
    }
}

impl Diagnostician for Scripted {
    fn name(&self) -> &str {
        "scripted"
    }

    fn next_action(&mut self, _view: &EpisodeView<'_>) -> Result<PolicyReply, PolicyFault> {
        let r = self.replies[self.at.min(self.replies.len() - 1)].clone();
        self.at += 1;
        Ok(r)
    }
}

fn request(f: FeatureId) -> PolicyAction {
    PolicyAction::RequestFeature(FeatureRequest::Known(f))
}

#[test]
fn tree_policy_matches_oracle() {
    let t = tree();
    let config = EpisodeConfig::for_tree(&t);
    for p in patients(&t, 400) {
        let tr = run_episode(&p, &mut TreePolicy::new(t.clone()), &config).unwrap();
        let (d, path) = t.evaluate(&p);
        assert_eq!(tr.outcome, path);
        assert_eq!(tr.outcome.diagnosis(), Some(d));
        tr.check_well_formed().unwrap();
    }
}

#[test]
fn tree_policy_states_branch_claims() {
    let t = tree();
    let values = FeatureValues::unavailable()
        .with(FeatureId::Gender, FeatureValue::Categorical("male".into()))
        .with(FeatureId::Hemoglobin, FeatureValue::Numeric(10.0))
        .with(FeatureId::Mcv, FeatureValue::Numeric(83.0))
        .with(FeatureId::ReticulocyteCount, FeatureValue::Numeric(1.6));
    let p = PatientRecord::new("x", values, Diagnosis::AplasticAnemia).unwrap();
    let tr = run_episode(&p, &mut TreePolicy::new(t.clone()), &EpisodeConfig::for_tree(&t)).unwrap();
    assert_eq!(tr.outcome.diagnosis(), Some(Diagnosis::AplasticAnemia));
    assert_eq!(tr.turns[1].reasoning.as_deref(), Some("hemoglobin 10 is less than 12."));
    assert!(tr.turns[3].raw.ends_with("DIAGNOSIS: Aplastic anemia"));
    assert_eq!(tr.turns[1].response.as_deref(), Some("mean corpuscular volume: 83 fL"));
}

#[test]
fn immediate_diagnosis_and_turn_limit() {
    let t = tree();
    let p = &patients(&t, 1)[0];
    let config = EpisodeConfig::for_tree(&t);
    let tr = run_episode(p, &mut Scripted::new(vec![PolicyAction::FinalDiagnosis(Diagnosis::NoAnemia)]), &config).unwrap();
    assert_eq!(tr.outcome, Pathway::new(vec![], Terminal::Diagnosis(Diagnosis::NoAnemia)));

    let tr = run_episode(p, &mut Scripted::new(vec![request(FeatureId::Ferritin)]), &config).unwrap();
    assert_eq!(tr.outcome.terminal, Terminal::Failure(FailureReason::TurnLimit));
    assert_eq!(tr.outcome.len(), config.max_turns);
    assert!(tr.turns.last().unwrap().response.as_deref().unwrap().ends_with(FINAL_CHANCE));
    assert_eq!(tr.turns.iter().filter(|t| t.events.contains(&TurnEvent::RepeatRequest)).count(), 19);
    tr.check_well_formed().unwrap();

    // The last-chance diagnosis after the cap is accepted.
    let mut script = vec![request(FeatureId::Ferritin); 20];
    script.push(PolicyAction::FinalDiagnosis(Diagnosis::AnemiaOfChronicDisease));
    let tr = run_episode(p, &mut Scripted::new(script), &config).unwrap();
    assert_eq!(tr.outcome.diagnosis(), Some(Diagnosis::AnemiaOfChronicDisease));
}

#[test]
fn malformed_retry_budget() {
    let t = tree();
    let p = &patients(&t, 1)[0];
    let config = EpisodeConfig::for_tree(&t);
    let tr = run_episode(
        p,
        &mut Scripted::new(vec![PolicyAction::Malformed, PolicyAction::FinalDiagnosis(Diagnosis::NoAnemia)]),
        &config,
    )
    .unwrap();
    assert_eq!(tr.outcome.diagnosis(), Some(Diagnosis::NoAnemia));
    assert_eq!(tr.turns[0].response.as_deref(), Some(MALFORMED_REMINDER));
    let tr = run_episode(p, &mut Scripted::new(vec![PolicyAction::Malformed]), &config).unwrap();
    assert_eq!(tr.outcome.terminal, Terminal::Failure(FailureReason::Unparseable));
    assert_eq!(tr.turns.len(), 2);
}

#[test]
fn off_list_and_unknown_requests() {
    let t = tree();
    let p = &patients(&t, 1)[0];
    let config = EpisodeConfig::for_tree(&t);
    let tr = run_episode(
        p,
        &mut Scripted::new(vec![
            request(FeatureId::Glucose),
            PolicyAction::RequestFeature(FeatureRequest::Unknown("blood pressure".into())),
            PolicyAction::FinalDiagnosis(Diagnosis::NoAnemia),
        ]),
        &config,
    )
    .unwrap();
    assert_eq!(tr.outcome.requests, vec![FeatureId::Glucose]);
    assert_eq!(tr.turns[0].provided, Some(FeatureValue::Unavailable));
    assert_eq!(tr.turns[1].response.as_deref(), Some("blood pressure: unavailable"));
    assert!(tr.turns[..2].iter().all(|t| t.events == vec![TurnEvent::OffListRequest]));
    tr.check_well_formed().unwrap();
}

#[test]
fn repeat_policies() {
    let t = tree();
    let p = &patients(&t, 1)[0];
    let mut config = EpisodeConfig::for_tree(&t);
    config.repeat_policy = RepeatPolicy::TerminateAfter(2);
    let tr = run_episode(p, &mut Scripted::new(vec![request(FeatureId::Hemoglobin)]), &config).unwrap();
    assert_eq!(tr.outcome.terminal, Terminal::Failure(FailureReason::RepeatLimit));
    assert_eq!(tr.outcome.len(), 4);
    config.repeat_policy = RepeatPolicy::Warn;
    let tr = run_episode(
        p,
        &mut Scripted::new(vec![
            request(FeatureId::Hemoglobin),
            request(FeatureId::Hemoglobin),
            PolicyAction::FinalDiagnosis(Diagnosis::NoAnemia),
        ]),
        &config,
    )
    .unwrap();
    assert!(tr.turns[1].response.as_deref().unwrap().contains("already provided"));
}

struct Failing;

impl Diagnostician for Failing {
    fn name(&self) -> &str {
        "failing"
    }

    fn next_action(&mut self, view: &EpisodeView<'_>) -> Result<PolicyReply, PolicyFault> {
        if view.turns.is_empty() {
            Ok(PolicyReply::new(request(FeatureId::Hemoglobin), "REQUEST: hemoglobin"))
        } else {
            Err(PolicyFault::Auth("401".into()))
        }
    }
}

#[test]
fn policy_fault_returns_partial_transcript() {
    let t = tree();
    let p = &patients(&t, 1)[0];
    let err = run_episode(p, &mut Failing, &EpisodeConfig::for_tree(&t)).unwrap_err();
    assert_eq!(err.fault, PolicyFault::Auth("401".into()));
    assert_eq!(err.partial.turns.len(), 1);
    assert_eq!(err.partial.outcome.terminal, Terminal::Failure(FailureReason::Aborted));
}

struct Closed;

impl FeatureSource for Closed {
    fn provide(&mut self, _feature: FeatureId) -> Option<FeatureValue> {
        None
    }
}

#[test]
fn closed_source_aborts() {
    let t = tree();
    let tr = run_episode_with("op", &mut Closed, &mut TreePolicy::new(t.clone()), &EpisodeConfig::for_tree(&t)).unwrap();
    assert_eq!(tr.outcome, Pathway::new(vec![], Terminal::Failure(FailureReason::Aborted)));
}

#[test]
fn noisy_rate_zero_is_the_tree() {
    let t = tree();
    let config = EpisodeConfig::for_tree(&t);
    for p in patients(&t, 200) {
        let a = run_episode(&p, &mut TreePolicy::new(t.clone()), &config).unwrap();
        let b = run_episode(&p, &mut NoisyPolicy::new(t.clone(), 0.0, 5, &p.patient_id), &config).unwrap();
        assert_eq!(a.outcome, b.outcome);
    }
}

#[test]
fn noisy_rate_one_on_a_single_split_is_always_wrong() {
    let spec = r#"
schema_version = 1
root = "h"
[[nodes]]
id = "h"
feature = "hemoglobin"
branches = [
  { op = "<", value = 12, diagnosis = "iron_deficiency_anemia" },
  { op = ">=", value = 12, diagnosis = "no_anemia" },
  { op = "is_unavailable", diagnosis = "inconclusive_diagnosis" },
]
"#;
    let t = Arc::new(load_tree(spec).unwrap());
    let mut cfg = SynthConfig { n_patients: 300, seed: 2, ..SynthConfig::default() };
    cfg.class_weights = [(Diagnosis::IronDeficiencyAnemia, 1.0), (Diagnosis::NoAnemia, 1.0)].into_iter().collect();
    let ps = generate(&t, &cfg).unwrap().patients;
    let config = EpisodeConfig::for_tree(&t);
    for p in &ps {
        let tr = run_episode(p, &mut NoisyPolicy::new(t.clone(), 1.0, 1, &p.patient_id), &config).unwrap();
        assert_ne!(tr.outcome.diagnosis(), Some(p.gold_label));
        assert!(tr.turns[1].reasoning.as_deref().unwrap().starts_with(FLIP_MARKER));
    }
}

#[test]
fn noisy_errors_always_carry_a_flip() {
    let t = tree();
    let config = EpisodeConfig::for_tree(&t);
    let ps = patients(&t, 300);
    let out = run_batch(&ps, &NoisyPolicyFactory { tree: t.clone(), rate: 0.2, seed: 7 }, &config, 2);
    assert_eq!(out.transcripts.len(), 300);
    let mut wrong = 0;
    for (tr, p) in out.transcripts.iter().zip(&ps) {
        assert_eq!(tr.patient_id, p.patient_id);
        if tr.outcome.diagnosis() != Some(p.gold_label) {
            wrong += 1;
            assert!(tr.turns.iter().any(|t| t.reasoning.as_deref().is_some_and(|r| r.contains(FLIP_MARKER))));
        }
    }
    assert!(wrong > 0);
    let again = run_batch(&ps, &NoisyPolicyFactory { tree: t, rate: 0.2, seed: 7 }, &config, 1);
    let strip = |v: &[Transcript]| v.iter().map(|t| (t.outcome.clone(), t.turns.clone())).collect::<Vec<_>>();
    assert_eq!(strip(&out.transcripts), strip(&again.transcripts));
}

struct FailFactory;

impl PolicyFactory for FailFactory {
    fn name(&self) -> String {
        "failing".into()
    }

    fn build(&self, _patient_id: &str, _values: &FeatureValues) -> Box<dyn Diagnostician> {
        Box::new(Failing)
    }
}

#[test]
fn batch_stops_on_fault() {
    let t = tree();
    let ps = patients(&t, 20);
    let out = run_batch(&ps, &FailFactory, &EpisodeConfig::for_tree(&t), 1);
    assert_eq!(out.fault.as_ref().map(|f| f.0.as_str()), Some("P000001"));
    assert_eq!(out.transcripts.len(), 1);
}
