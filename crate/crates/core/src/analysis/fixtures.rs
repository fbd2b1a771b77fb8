//! Published reference results shipped as data: commonest pathway maps for
//! five policies, a label-level GPT-4 replay and the DQN table row.

use std::collections::BTreeMap;

use super::pathways::{PathwayMap, PathwayString};
use super::report::{report_from_labels, RunReport, TableRow};
use crate::domain::Diagnosis;

pub const PATHWAY_MAPS_JSON: &str = include_str!("../../fixtures/pathway_maps.json");
pub const GPT4_REPLAY_CSV: &str = include_str!("../../fixtures/gpt4_replay.csv");

/// Names in the shipped maps file, in display order.
pub const FIXTURE_MODELS: [&str; 5] = ["decision_tree", "gpt4", "llama", "mistral", "dqn"];

pub fn pathway_map_fixtures() -> Vec<(String, PathwayMap)> {
    let all: BTreeMap<String, PathwayMap> = serde_json::from_str(PATHWAY_MAPS_JSON).expect("shipped fixture parses");
    FIXTURE_MODELS.iter().map(|m| (m.to_string(), all[*m].clone())).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayRecord {
    pub patient_id: String,
    pub gold: Diagnosis,
    pub predicted: Diagnosis,
    pub pathway: PathwayString,
}

pub fn gpt4_replay() -> Vec<ReplayRecord> {
    let mut rd = csv::Reader::from_reader(GPT4_REPLAY_CSV.as_bytes());
    rd.records()
        .map(|r| {
            let r = r.expect("shipped fixture parses");
            let d = |s: &str| Diagnosis::from_canonical(s).expect("known class");
            ReplayRecord {
                patient_id: r[0].to_string(),
                gold: d(&r[1]),
                predicted: d(&r[2]),
                pathway: PathwayString::parse(&r[3]).expect("valid pathway"),
            }
        })
        .collect()
}

/// Metrics recomputed from the replay records.
pub fn gpt4_replay_report() -> RunReport {
    let recs = gpt4_replay();
    let preds: Vec<Option<Diagnosis>> = recs.iter().map(|r| Some(r.predicted)).collect();
    let golds: Vec<Diagnosis> = recs.iter().map(|r| r.gold).collect();
    let lengths: Vec<usize> = recs.iter().map(|r| r.pathway.len()).collect();
    report_from_labels("GPT-4 (replay)", &preds, &golds, &lengths, 0).expect("non-empty fixture")
}

/// Reported DQN results, for comparison tables only.
pub fn dqn_row() -> TableRow {
    TableRow {
        name: "DQN (reported)".into(),
        accuracy: 97.5,
        f1: 97.5,
        roc_auc: 98.6,
        avg_length: Some(4.82),
        time_ms: Some(1600),
    }
}
