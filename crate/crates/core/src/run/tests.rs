use std::io::Cursor;

use super::*;
use crate::domain::{Diagnosis, FailureReason, FeatureId, Terminal};
use crate::dtree::DEFAULT_TREE_TOML;
use crate::synth::{generate, SynthConfig};

fn tree() -> Arc<DecisionTree> {
    Arc::new(load_tree(DEFAULT_TREE_TOML).unwrap())
}

fn spec(dir: &Path, id: &str, policy: PolicySpec, t: &DecisionTree) -> RunSpec {
    RunSpec {
        runs_dir: dir.to_path_buf(),
        run_id: Some(id.into()),
        take_first: Some(150),
        parallel: 1,
        episode: EpisodeConfig::for_tree(t),
        policy,
    }
}

#[test]
fn run_then_eval_is_replayable() {
    let t = tree();
    let ps = generate(&t, &SynthConfig { n_patients: 200, seed: 5, ..SynthConfig::default() }).unwrap().patients;
    let tmp = tempfile::tempdir().unwrap();
    let out = execute_run(t.clone(), &ps, &spec(tmp.path(), "tree", PolicySpec::Tree, &t)).unwrap();
    assert_eq!(out.transcripts.len(), 150);
    assert!(out.fault.is_none());
    let opts = EvalOptions { errors: true, sankey: true, pathways: true };
    let r = evaluate_run(&out.dir, &ps, opts).unwrap();
    assert_eq!(r.accuracy, 100.0);
    assert!(r.error_taxonomy.as_ref().unwrap().values().all(|n| *n == 0));
    let first = fs::read(out.dir.join(REPORT_JSON)).unwrap();
    evaluate_run(&out.dir, &ps, opts).unwrap();
    assert_eq!(first, fs::read(out.dir.join(REPORT_JSON)).unwrap());
    for f in [REPORT_TXT, SANKEY_JSON, SANKEY_HTML, PATHWAYS_JSON] {
        assert!(out.dir.join(f).exists(), "{f}");
    }

    // Same run id refuses to overwrite.
    assert!(matches!(execute_run(t.clone(), &ps, &spec(tmp.path(), "tree", PolicySpec::Tree, &t)), Err(RunError::Io { .. })));

    // A different dataset is refused.
    let other = generate(&t, &SynthConfig { n_patients: 200, seed: 6, ..SynthConfig::default() }).unwrap().patients;
    let err = evaluate_run(&out.dir, &other, opts).unwrap_err();
    assert!(matches!(err, RunError::DigestMismatch { ref what, .. } if what == "dataset"));
    assert_eq!(err.exit_code(), 1);

    // Tampered transcripts are detected.
    let tp = out.dir.join(TRANSCRIPTS_FILE);
    let mut bytes = fs::read(&tp).unwrap();
    bytes.extend_from_slice(b"\n");
    fs::write(&tp, bytes).unwrap();
    assert!(matches!(RunManifest::load(&out.dir), Err(RunError::DigestMismatch { .. })));
}

#[test]
fn noisy_runs_repeat_exactly() {
    let t = tree();
    let ps = generate(&t, &SynthConfig { n_patients: 150, seed: 2, ..SynthConfig::default() }).unwrap().patients;
    let tmp = tempfile::tempdir().unwrap();
    let policy = PolicySpec::Noisy { rate: 0.2, seed: 7 };
    let a = execute_run(t.clone(), &ps, &spec(tmp.path(), "a", policy.clone(), &t)).unwrap();
    let b = execute_run(t.clone(), &ps, &spec(tmp.path(), "b", policy, &t)).unwrap();
    let strip = |ts: Vec<Transcript>| ts.into_iter().map(|t| Transcript { elapsed_ms: 0, ..t }).collect::<Vec<_>>();
    assert_eq!(strip(a.transcripts), strip(b.transcripts));
    assert_eq!(a.manifest.dataset_digest, b.manifest.dataset_digest);
}

#[test]
fn mock_run_writes_request_log() {
    let t = tree();
    let ps = generate(&t, &SynthConfig { n_patients: 150, seed: 2, ..SynthConfig::default() }).unwrap().patients;
    let tmp = tempfile::tempdir().unwrap();
    let prompt = PromptConfig::for_tree(&t, Mode::Sequential).unwrap();
    let out = execute_run(t.clone(), &ps, &spec(tmp.path(), "m", PolicySpec::Mock { prompt, faults: vec![] }, &t)).unwrap();
    assert!(out.manifest.outputs.contains(&REQUEST_LOG_FILE.to_string()));
    let r = evaluate_run(&out.dir, &ps, EvalOptions { errors: true, ..Default::default() }).unwrap();
    assert_eq!(r.accuracy, 100.0);
}

#[test]
fn bad_configs_exit_one() {
    let t = tree();
    let tmp = tempfile::tempdir().unwrap();
    let err = execute_run(t.clone(), &[], &spec(tmp.path(), "x", PolicySpec::Noisy { rate: 1.5, seed: 0 }, &t)).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    let err = execute_run(t.clone(), &[], &spec(tmp.path(), "y", PolicySpec::Tree, &t)).unwrap_err();
    assert_eq!(err.exit_code(), 1, "{err}");
}

#[test]
fn value_input_parsing() {
    assert_eq!(parse_value_input(FeatureId::Hemoglobin, " 10 g/dL\n"), Ok(FeatureValue::Numeric(10.0)));
    assert_eq!(parse_value_input(FeatureId::Mcv, "Unavailable"), Ok(FeatureValue::Unavailable));
    assert_eq!(parse_value_input(FeatureId::Gender, "Male"), Ok(FeatureValue::Categorical("male".into())));
    assert!(parse_value_input(FeatureId::Mcv, "eighty").is_err());
    assert!(parse_value_input(FeatureId::Mcv, "inf").is_err());
    assert!(parse_value_input(FeatureId::Gender, "x").is_err());
    assert!(parse_value_input(FeatureId::Mcv, "").is_err());
}

use crate::domain::FeatureValue;

fn session(input: &str, id: &str, dir: &Path) -> (Result<(Transcript, PathBuf), RunError>, String) {
    let t = tree();
    let mut out = Vec::new();
    let r = interactive_session(
        t.clone(),
        &PolicySpec::Tree,
        &EpisodeConfig::for_tree(&t),
        "operator",
        dir,
        id,
        Cursor::new(input.to_string()),
        &mut out,
    );
    (r, String::from_utf8(out).unwrap())
}

#[test]
fn interactive_aplastic_path() {
    let tmp = tempfile::tempdir().unwrap();
    let (r, shown) = session("10\nfemale\nabc\n83\n1.6\n", "s1", tmp.path());
    let (tr, dir) = r.unwrap();
    assert_eq!(tr.outcome.terminal, Terminal::Diagnosis(Diagnosis::AplasticAnemia));
    assert!(shown.contains("Invalid input"));
    assert!(shown.contains("Requested: reticulocyte count"));
    assert!(dir.join(SESSION_FILE).exists());
    let saved = read_transcripts(fs::File::open(dir.join(TRANSCRIPTS_FILE)).unwrap()).unwrap();
    assert_eq!(saved, vec![tr]);
}

#[test]
fn interactive_unavailable_and_eof() {
    let tmp = tempfile::tempdir().unwrap();
    let (r, _) = session("10\nmale\nunavailable\n", "s2", tmp.path());
    assert_eq!(r.unwrap().0.outcome.terminal, Terminal::Diagnosis(Diagnosis::UnspecifiedAnemia));
    let (r, _) = session("10\n", "s3", tmp.path());
    let (tr, dir) = r.unwrap();
    assert_eq!(tr.outcome.terminal, Terminal::Failure(FailureReason::Aborted));
    assert!(dir.join(TRANSCRIPTS_FILE).exists());
}

#[test]
fn interactive_rejects_plain_mode() {
    let t = tree();
    let tmp = tempfile::tempdir().unwrap();
    let prompt = PromptConfig::for_tree(&t, Mode::Plain).unwrap();
    let err = interactive_session(
        t.clone(),
        &PolicySpec::Mock { prompt, faults: vec![] },
        &EpisodeConfig::for_tree(&t),
        "op",
        tmp.path(),
        "p",
        Cursor::new(String::new()),
        Vec::new(),
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), 1);
}
