use std::sync::Arc;

use dxpath_core::analysis::{build_report, classify_errors};
use dxpath_core::dialogue::{run_batch, EpisodeConfig};
use dxpath_core::dtree::{load_tree, DEFAULT_TREE_TOML};
use dxpath_core::gateway::{EndpointConfig, LlmPolicyFactory, MockLlm, MockServer, Mode, PromptConfig, ServerFaults};
use dxpath_core::synth::{generate, SynthConfig};

#[test]
fn sequential_run_over_http() {
    let t = Arc::new(load_tree(DEFAULT_TREE_TOML).unwrap());
    let server =
        MockServer::start(MockLlm::new(t.clone(), vec![]), ServerFaults { fail_with: vec![503, 429], ..ServerFaults::default() })
            .unwrap();
    let log = tempfile::NamedTempFile::new().unwrap();
    let ep = EndpointConfig {
        base_url: server.base_url(),
        backoff_ms: 1,
        request_log_path: Some(log.path().to_path_buf()),
        ..EndpointConfig::default()
    };
    let client = ep.connect().unwrap();
    let prompt = PromptConfig::for_tree(&t, Mode::Sequential).unwrap();
    let factory = LlmPolicyFactory::new("mock-http", client, ep.params(), prompt);
    let ps = generate(&t, &SynthConfig { n_patients: 100, seed: 8, ..SynthConfig::default() }).unwrap().patients;
    let out = run_batch(&ps, &factory, &EpisodeConfig::for_tree(&t), 2);
    assert!(out.fault.is_none());
    let r = build_report("mock-http", &out.transcripts, &ps, 0).unwrap();
    assert_eq!(r.accuracy, 100.0);
    assert!(classify_errors(&out.transcripts, &ps, &t, true).unwrap().counts.values().all(|n| *n == 0));
    let calls: usize = out.transcripts.iter().map(|tr| tr.turns.len()).sum();
    // The first two hits were injected failures and were retried.
    assert_eq!(server.hits(), calls + 2);
    let logged = std::fs::read_to_string(log.path()).unwrap().lines().count();
    assert_eq!(logged, calls + 2);
}
