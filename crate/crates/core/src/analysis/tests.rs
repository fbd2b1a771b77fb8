use std::sync::Arc;

use super::fixtures::{dqn_row, gpt4_replay, gpt4_replay_report, pathway_map_fixtures};
use super::*;
use crate::dialogue::{run_batch, EpisodeConfig, NoisyPolicyFactory, TreePolicyFactory, FLIP_MARKER};
use crate::domain::{Diagnosis, PatientRecord, Transcript};
use crate::dtree::{load_tree, DecisionTree, DEFAULT_TREE_TOML};
use crate::gateway::{EndpointConfig, LlmPolicyFactory, MockFault, MockLlm, Mode, PromptConfig};
use crate::synth::{generate, SynthConfig};

fn tree() -> Arc<DecisionTree> {
    Arc::new(load_tree(DEFAULT_TREE_TOML).unwrap())
}

fn patients(t: &DecisionTree, n: usize) -> Vec<PatientRecord> {
    generate(t, &SynthConfig { n_patients: n, seed: 3, ..SynthConfig::default() }).unwrap().patients
}

/// Ten predictions over three classes; values worked out by hand.
fn ten() -> (Vec<Option<char>>, Vec<char>) {
    let gold: Vec<char> = "AAAABBBCCC".chars().collect();
    let pred: Vec<Option<char>> = "AABCBBACCB".chars().map(Some).collect();
    (pred, gold)
}

#[test]
fn ten_prediction_fixture() {
    let (pred, gold) = ten();
    let classes = ['A', 'B', 'C'];
    assert_eq!(accuracy(&pred, &gold).unwrap(), 60.0);
    let f1 = f1_scores(&pred, &gold, &classes).unwrap();
    let want = [400.0 / 7.0, 400.0 / 7.0, 200.0 / 3.0];
    for ((_, got), w) in f1.per_class.iter().zip(want) {
        assert!((got - w).abs() < 1e-9);
    }
    assert!((f1.macro_avg - 7600.0 / 126.0).abs() < 1e-9);
    let auc = roc_auc(&pred, &gold, &classes).unwrap();
    let want = [200.0 / 3.0, 2900.0 / 42.0, 3200.0 / 42.0];
    for ((_, got), w) in auc.per_class.iter().zip(want) {
        assert!((got - w).abs() < 1e-9);
    }
    assert!((auc.macro_avg - 8900.0 / 126.0).abs() < 1e-9);
}

fn pairwise_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, pi) in positive.iter().enumerate() {
        for (j, pj) in positive.iter().enumerate() {
            if *pi && !*pj {
                den += 1.0;
                num += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    (den > 0.0).then(|| num / den)
}

#[test]
fn auc_matches_pairwise_count_on_all_small_binary_cases() {
    for n in 1..=5u32 {
        for g in 0..(1u32 << n) {
            for p in 0..(1u32 << n) {
                let gold: Vec<u8> = (0..n).map(|i| ((g >> i) & 1) as u8).collect();
                let pred: Vec<Option<u8>> = (0..n).map(|i| Some(((p >> i) & 1) as u8)).collect();
                let auc = roc_auc(&pred, &gold, &[0, 1]).unwrap();
                for c in [0u8, 1] {
                    let scores: Vec<f64> = pred.iter().map(|x| f64::from(u8::from(*x == Some(c)))).collect();
                    let positive: Vec<bool> = gold.iter().map(|x| *x == c).collect();
                    let want = pairwise_auc(&scores, &positive);
                    let got = auc.per_class.iter().find(|(k, _)| *k == c).map(|(_, v)| v / 100.0);
                    assert_eq!(got.is_some(), want.is_some());
                    if let (Some(a), Some(b)) = (got, want) {
                        assert!((a - b).abs() < 1e-12);
                        // One-hot scores reduce to balanced accuracy.
                        let tp = (0..n as usize).filter(|i| positive[*i] && scores[*i] == 1.0).count() as f64;
                        let tn = (0..n as usize).filter(|i| !positive[*i] && scores[*i] == 0.0).count() as f64;
                        let np = positive.iter().filter(|x| **x).count() as f64;
                        assert!((a - (tp / np + tn / (n as f64 - np)) / 2.0).abs() < 1e-12);
                    }
                }
            }
        }
    }
}

#[test]
fn tree_run_is_clean() {
    let t = tree();
    let ps = patients(&t, 500);
    let out = run_batch(&ps, &TreePolicyFactory(t.clone()), &EpisodeConfig::for_tree(&t), 1);
    let r = build_report("tree", &out.transcripts, &ps, 0).unwrap();
    assert_eq!(r.accuracy, 100.0);
    let tax = classify_errors(&out.transcripts, &ps, &t, true).unwrap();
    assert!(tax.counts.values().all(|n| *n == 0), "{:?}", tax.episodes.first());
    // Every modal pathway is one of the tree's own paths to that class.
    for (d, p) in commonest_pathways(&out.transcripts) {
        let tree_paths: Vec<PathwayString> = t
            .paths()
            .iter()
            .filter(|path| path.diagnosis == d)
            .map(|path| PathwayString::from_features(&path.features(&t)))
            .collect();
        assert!(tree_paths.contains(&p), "{d:?} {p}");
    }
    check_conservation(&sankey_export(&out.transcripts)).unwrap();
}

#[test]
fn noisy_errors_are_comparison_errors() {
    let t = tree();
    let ps = patients(&t, 600);
    let out = run_batch(&ps, &NoisyPolicyFactory { tree: t.clone(), rate: 0.2, seed: 9 }, &EpisodeConfig::for_tree(&t), 1);
    let tax = classify_errors(&out.transcripts, &ps, &t, true).unwrap();
    assert!(tax.n_misdiagnosed > 0);
    let flagged: std::collections::HashSet<&str> =
        tax.episodes.iter().filter(|(_, ks)| ks.contains(&ErrorKind::ComparisonError)).map(|(id, _)| id.as_str()).collect();
    let flipped = |tr: &Transcript| tr.turns.iter().any(|x| x.reasoning.as_deref().is_some_and(|r| r.contains(FLIP_MARKER)));
    for (tr, p) in out.transcripts.iter().zip(&ps) {
        assert_eq!(flagged.contains(tr.patient_id.as_str()), flipped(tr), "{}", tr.patient_id);
        if tr.outcome.diagnosis() != Some(p.gold_label) {
            assert!(flipped(tr));
        }
    }
    assert_eq!(tax.counts[&ErrorKind::RuleDeviation], 0);
    check_conservation(&sankey_export(&out.transcripts)).unwrap();
}

#[test]
fn mock_faults_are_counted() {
    let t = tree();
    let ps = patients(&t, 60);
    let config = EpisodeConfig::for_tree(&t);
    let run = |faults: Vec<MockFault>, cot: bool| {
        let ep = EndpointConfig::default();
        let client = ep.client_over(Box::new(MockLlm::new(t.clone(), faults))).unwrap();
        let f = LlmPolicyFactory::new("mock", client, ep.params(), PromptConfig::for_tree(&t, Mode::Sequential).unwrap());
        let out = run_batch(&ps, &f, &config, 1);
        (classify_errors(&out.transcripts, &ps, &t, cot).unwrap(), out.transcripts)
    };
    let (tax, ts) = run(vec![MockFault::OffListRequest { turn: 2, name: "blood pressure".into() }], true);
    let injected = ts.iter().filter(|tr| tr.turns.len() > 2 && tr.turns[2].raw == "REQUEST: blood pressure").count();
    assert!(injected > 0);
    assert_eq!(tax.counts[&ErrorKind::OffListRequest], injected);

    let (tax, _) = run(vec![MockFault::PostDiagnosisChatter], true);
    assert_eq!(tax.counts[&ErrorKind::PostDiagnosisChatter], ps.len());
    let (tax, _) = run(vec![MockFault::MissingCot], true);
    assert_eq!(tax.counts[&ErrorKind::MissingCoT], ps.len());
    let (tax, _) = run(vec![MockFault::MissingCot], false);
    assert_eq!(tax.counts[&ErrorKind::MissingCoT], 0);
    let (tax, ts) = run(vec![MockFault::ValueRejection { turn: 1 }], true);
    assert_eq!(tax.counts[&ErrorKind::ValueRejection], ts.iter().filter(|tr| tr.outcome.len() > 1).count());
    let (tax, _) = run(vec![MockFault::PrematureDiagnosis { turn: 0, diagnosis: Diagnosis::AplasticAnemia }], true);
    assert_eq!(tax.misdiagnosed[&ErrorKind::RuleDeviation], tax.n_misdiagnosed);
    let (tax, _) = run(vec![MockFault::MissingMarker { turn: 0 }, MockFault::MissingMarker { turn: 1 }], true);
    assert_eq!(tax.counts[&ErrorKind::Unparseable], ps.len());
}

#[test]
fn replay_fixture_metrics() {
    let recs = gpt4_replay();
    assert_eq!(recs.len(), 250);
    let r = gpt4_replay_report();
    assert_eq!(format_metric(r.accuracy), "98.4");
    assert!((r.f1_macro - 98.21188861039928).abs() < 1e-9);
    assert!((r.roc_auc_macro - 99.088219211099).abs() < 1e-9);
    assert_eq!(format_metric(r.f1_macro), "98.21");
    assert_eq!(format_metric(r.roc_auc_macro), "99.09");
    assert!((r.mean_pathway_length - 4.08).abs() < 1e-12);
    let table = render_table(&[TableRow::from_report(&r, true), dqn_row()]);
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[2], "GPT-4 (replay) |     98.4 |    98.21 |   99.09 |        4.08 | 0.0s");
    assert_eq!(rows[3], "DQN (reported) |     97.5 |     97.5 |    98.6 |        4.82 | 1.6s");
}

#[test]
fn fixture_distance_matrix() {
    let maps = pathway_map_fixtures();
    let m = distance_matrix(&maps);
    let at = |a: &str, b: &str| {
        let i = maps.iter().position(|(n, _)| n == a).unwrap();
        let j = maps.iter().position(|(n, _)| n == b).unwrap();
        m[i][j].unwrap()
    };
    assert_eq!(at("decision_tree", "gpt4"), 0.0);
    assert_eq!(at("gpt4", "llama"), 1.75);
    assert_eq!(at("gpt4", "mistral"), 1.875);
    assert_eq!(at("llama", "mistral"), 2.625);
    assert_eq!(at("dqn", "gpt4"), 2.0);
    assert_eq!(at("dqn", "llama"), 2.25);
    assert_eq!(at("dqn", "mistral"), 2.375);
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            assert_eq!(*v, m[j][i]);
        }
    }
}
