//! Run directories: executing a batch, persisting transcripts with a
//! manifest, and recomputing reports from what was persisted.
//!
//! Layout of `runs/<run_id>/`: `manifest.json`, `tree.toml`,
//! `transcripts.jsonl`, optionally `requests.jsonl`, and after evaluation
//! `report.json`, `report.txt`, `sankey.json`, `sankey.html`, `pathways.json`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{
    build_report, check_conservation, classify_errors, commonest_pathways, render_report_text, sankey_export, sankey_html,
    RunReport,
};
use crate::dialogue::{run_batch, EpisodeConfig, NoisyPolicyFactory, PolicyFactory, PolicyFault, TreePolicyFactory};
use crate::domain::{PatientRecord, Transcript};
use crate::dtree::{load_tree, DecisionTree};
use crate::gateway::{EndpointConfig, LlmPolicyFactory, MockFault, MockLlm, Mode, PromptConfig};
use crate::synth::write_csv;

mod interactive;

pub use interactive::{interactive_session, parse_value_input, SessionRecord, TerminalSource, SESSION_FILE};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TREE_FILE: &str = "tree.toml";
pub const TRANSCRIPTS_FILE: &str = "transcripts.jsonl";
pub const REQUEST_LOG_FILE: &str = "requests.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const SANKEY_JSON: &str = "sankey.json";
pub const SANKEY_HTML: &str = "sankey.html";
pub const PATHWAYS_JSON: &str = "pathways.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{what} digest mismatch: expected {expected}, found {found}")]
    DigestMismatch { what: String, expected: String, found: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Data(String),
    #[error("endpoint failure for {patient}: {fault}")]
    Endpoint { patient: String, fault: PolicyFault },
}

impl RunError {
    /// 1 for configuration problems, 2 for runtime and endpoint failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::DigestMismatch { .. } => 1,
            _ => 2,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        RunError::Io { path: path.to_path_buf(), source }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn json_digest<T: Serialize>(v: &T) -> String {
    sha256_hex(serde_json::to_string(v).expect("serializable").as_bytes())
}

/// Digest of the canonical CSV form of `patients`.
pub fn dataset_digest(patients: &[PatientRecord]) -> String {
    let mut buf = Vec::new();
    write_csv(patients, &mut buf).expect("in-memory write");
    sha256_hex(&buf)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    Tree,
    Noisy { rate: f64, seed: u64 },
    Mock { prompt: PromptConfig, faults: Vec<MockFault> },
    Llm { endpoint: EndpointConfig, prompt: PromptConfig },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyDescriptor {
    Tree,
    Noisy { rate: f64, seed: u64 },
    Mock { mode: Mode, cot: bool, prompt_digest: String, faults: Vec<MockFault> },
    Llm { mode: Mode, cot: bool, model: String, prompt_digest: String, endpoint_digest: String },
}

impl PolicyDescriptor {
    pub fn name(&self) -> String {
        match self {
            PolicyDescriptor::Tree => "tree".into(),
            PolicyDescriptor::Noisy { rate, .. } => format!("noisy({rate})"),
            PolicyDescriptor::Mock { mode, .. } => format!("mock-{}", mode_name(*mode)),
            PolicyDescriptor::Llm { model, mode, .. } => format!("{model}-{}", mode_name(*mode)),
        }
    }

    /// Whether the prompt asked for step-by-step reasoning.
    pub fn cot_expected(&self) -> bool {
        match self {
            PolicyDescriptor::Tree | PolicyDescriptor::Noisy { .. } => true,
            PolicyDescriptor::Mock { cot, .. } | PolicyDescriptor::Llm { cot, .. } => *cot,
        }
    }

    pub fn sequential(&self) -> bool {
        match self {
            PolicyDescriptor::Mock { mode, .. } | PolicyDescriptor::Llm { mode, .. } => *mode == Mode::Sequential,
            _ => true,
        }
    }
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Plain => "plain",
        Mode::Sequential => "sequential",
    }
}

impl PolicySpec {
    pub fn descriptor(&self) -> PolicyDescriptor {
        match self {
            PolicySpec::Tree => PolicyDescriptor::Tree,
            PolicySpec::Noisy { rate, seed } => PolicyDescriptor::Noisy { rate: *rate, seed: *seed },
            PolicySpec::Mock { prompt, faults } => PolicyDescriptor::Mock {
                mode: prompt.mode,
                cot: prompt.include_cot,
                prompt_digest: json_digest(prompt),
                faults: faults.clone(),
            },
            PolicySpec::Llm { endpoint, prompt } => PolicyDescriptor::Llm {
                mode: prompt.mode,
                cot: prompt.include_cot,
                model: endpoint.model_name.clone(),
                prompt_digest: json_digest(prompt),
                endpoint_digest: json_digest(endpoint),
            },
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            PolicySpec::Tree => Ok(()),
            PolicySpec::Noisy { rate, .. } => {
                if (0.0..=1.0).contains(rate) {
                    Ok(())
                } else {
                    Err(format!("noise rate {rate} is outside [0, 1]"))
                }
            }
            PolicySpec::Mock { prompt, .. } => prompt.validate(),
            PolicySpec::Llm { endpoint, prompt } => prompt.validate().and_then(|_| endpoint.validate()),
        }
    }

    /// Policy factory; LLM request logs go to `log` unless configured.
    pub fn factory(&self, tree: &Arc<DecisionTree>, log: Option<&Path>) -> Result<Box<dyn PolicyFactory>, RunError> {
        let name = self.descriptor().name();
        Ok(match self {
            PolicySpec::Tree => Box::new(TreePolicyFactory(tree.clone())),
            PolicySpec::Noisy { rate, seed } => Box::new(NoisyPolicyFactory { tree: tree.clone(), rate: *rate, seed: *seed }),
            PolicySpec::Mock { prompt, faults } => {
                let ep = EndpointConfig { request_log_path: log.map(Path::to_path_buf), ..EndpointConfig::default() };
                let client = ep
                    .client_over(Box::new(MockLlm::new(tree.clone(), faults.clone())))
                    .map_err(|e| RunError::Config(e.to_string()))?;
                Box::new(LlmPolicyFactory::new(name, client, ep.params(), prompt.clone()))
            }
            PolicySpec::Llm { endpoint, prompt } => {
                let mut ep = endpoint.clone();
                if ep.request_log_path.is_none() {
                    ep.request_log_path = log.map(Path::to_path_buf);
                }
                let client = ep.connect().map_err(|e| RunError::Config(e.to_string()))?;
                Box::new(LlmPolicyFactory::new(name, client, ep.params(), prompt.clone()))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub run_id: String,
    pub dataset_digest: String,
    pub n_patients: usize,
    pub take_first: Option<usize>,
    pub tree_digest: String,
    pub policy: PolicyDescriptor,
    pub episode: EpisodeConfig,
    pub parallel: usize,
    pub started: String,
    pub finished: String,
    pub wall_time_ms: u64,
    pub transcripts_digest: String,
    /// Set when an endpoint fault stopped the batch early.
    pub aborted: Option<String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    /// Load `dir`'s manifest and check the tree and transcript digests.
    pub fn load(dir: &Path) -> Result<(RunManifest, DecisionTree, Vec<Transcript>), RunError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| RunError::io(&path, e))?;
        let m: RunManifest = serde_json::from_str(&text).map_err(|e| RunError::Data(format!("{}: {e}", path.display())))?;
        if m.manifest_version != MANIFEST_VERSION {
            return Err(RunError::Data(format!("unsupported manifest version {}", m.manifest_version)));
        }
        let tree_path = dir.join(TREE_FILE);
        let spec = fs::read_to_string(&tree_path).map_err(|e| RunError::io(&tree_path, e))?;
        let tree = load_tree(&spec).map_err(|e| RunError::Data(format!("{}: {e}", tree_path.display())))?;
        if tree.digest() != m.tree_digest {
            return Err(RunError::DigestMismatch {
                what: "tree".into(),
                expected: m.tree_digest.clone(),
                found: tree.digest().into(),
            });
        }
        let tpath = dir.join(TRANSCRIPTS_FILE);
        let bytes = fs::read(&tpath).map_err(|e| RunError::io(&tpath, e))?;
        let found = sha256_hex(&bytes);
        if found != m.transcripts_digest {
            return Err(RunError::DigestMismatch { what: "transcripts".into(), expected: m.transcripts_digest.clone(), found });
        }
        let transcripts = read_transcripts(&bytes[..]).map_err(|e| RunError::Data(format!("{}: {e}", tpath.display())))?;
        Ok((m, tree, transcripts))
    }
}

pub fn write_transcripts<W: Write>(transcripts: &[Transcript], out: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(out);
    for t in transcripts {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_transcripts<R: std::io::Read>(input: R) -> Result<Vec<Transcript>, String> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub runs_dir: PathBuf,
    pub run_id: Option<String>,
    pub take_first: Option<usize>,
    pub parallel: usize,
    pub episode: EpisodeConfig,
    pub policy: PolicySpec,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub transcripts: Vec<Transcript>,
    pub fault: Option<(String, PolicyFault)>,
}

/// `<prefix>-<UTC timestamp>` with characters unsafe in paths removed.
pub fn default_run_id(prefix: &str) -> String {
    let clean: String = prefix.chars().filter(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.')).collect();
    format!("{clean}-{}", chrono::Utc::now().format("%Y%m%dT%H%M%S%.3f"))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    fs::write(path, bytes).map_err(|e| RunError::io(path, e))
}

/// Run the batch and persist it into a fresh run directory. A batch cut
/// short by an endpoint fault is still persisted; the fault is returned in
/// the outcome.
pub fn execute_run(tree: Arc<DecisionTree>, patients: &[PatientRecord], spec: &RunSpec) -> Result<RunOutcome, RunError> {
    spec.policy.validate().map_err(RunError::Config)?;
    spec.episode.validate().map_err(RunError::Config)?;
    let subset = match spec.take_first {
        Some(k) if k > patients.len() => {
            return Err(RunError::Config(format!("--take-first {k} exceeds the {} patients in the dataset", patients.len())))
        }
        Some(k) => &patients[..k],
        None => patients,
    };
    let descriptor = spec.policy.descriptor();
    let run_id = spec.run_id.clone().unwrap_or_else(|| default_run_id(&descriptor.name()));
    fs::create_dir_all(&spec.runs_dir).map_err(|e| RunError::io(&spec.runs_dir, e))?;
    let dir = spec.runs_dir.join(&run_id);
    fs::create_dir(&dir).map_err(|e| RunError::io(&dir, e))?;
    write_file(&dir.join(TREE_FILE), tree.to_spec_toml().as_bytes())?;

    let started = now();
    let clock = Instant::now();
    let log = dir.join(REQUEST_LOG_FILE);
    let uses_log = matches!(spec.policy, PolicySpec::Mock { .. } | PolicySpec::Llm { .. });
    let factory = spec.policy.factory(&tree, uses_log.then_some(log.as_path()))?;
    let batch = run_batch(subset, factory.as_ref(), &spec.episode, spec.parallel);
    let wall_time_ms = clock.elapsed().as_millis() as u64;

    let mut buf = Vec::new();
    write_transcripts(&batch.transcripts, &mut buf).map_err(|e| RunError::io(&dir, e))?;
    write_file(&dir.join(TRANSCRIPTS_FILE), &buf)?;
    let mut outputs = vec![TREE_FILE.to_string(), TRANSCRIPTS_FILE.to_string()];
    if uses_log && log.exists() {
        outputs.push(REQUEST_LOG_FILE.to_string());
    }
    let manifest = RunManifest {
        manifest_version: MANIFEST_VERSION,
        run_id,
        dataset_digest: dataset_digest(subset),
        n_patients: subset.len(),
        take_first: spec.take_first,
        tree_digest: tree.digest().to_string(),
        policy: descriptor,
        episode: spec.episode.clone(),
        parallel: spec.parallel,
        started,
        finished: now(),
        wall_time_ms,
        transcripts_digest: sha256_hex(&buf),
        aborted: batch.fault.as_ref().map(|(id, f)| format!("{id}: {f}")),
        outputs,
    };
    write_file(&dir.join(MANIFEST_FILE), (serde_json::to_string_pretty(&manifest).expect("serializable") + "\n").as_bytes())?;
    Ok(RunOutcome { dir, manifest, transcripts: batch.transcripts, fault: batch.fault })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvalOptions {
    pub errors: bool,
    pub sankey: bool,
    pub pathways: bool,
}

/// Recompute the report of a persisted run against its dataset and write
/// the report files. Output depends only on persisted inputs.
pub fn evaluate_run(dir: &Path, dataset: &[PatientRecord], opts: EvalOptions) -> Result<RunReport, RunError> {
    let (m, tree, transcripts) = RunManifest::load(dir)?;
    let subset = match m.take_first {
        Some(k) if k > dataset.len() => {
            return Err(RunError::Config(format!("run used the first {k} patients but the dataset has {}", dataset.len())))
        }
        Some(k) => &dataset[..k],
        None => dataset,
    };
    let found = dataset_digest(subset);
    if found != m.dataset_digest {
        return Err(RunError::DigestMismatch { what: "dataset".into(), expected: m.dataset_digest, found });
    }
    let mut report =
        build_report(&m.policy.name(), &transcripts, subset, m.wall_time_ms).map_err(|e| RunError::Data(e.to_string()))?;
    if opts.errors {
        let tax = classify_errors(&transcripts, subset, &tree, m.policy.cot_expected()).map_err(RunError::Data)?;
        report.error_taxonomy = Some(tax.counts);
    }
    write_file(&dir.join(REPORT_JSON), (serde_json::to_string_pretty(&report).expect("serializable") + "\n").as_bytes())?;
    write_file(&dir.join(REPORT_TXT), render_report_text(&report).as_bytes())?;
    if opts.sankey && !transcripts.is_empty() {
        let s = sankey_export(&transcripts);
        check_conservation(&s).map_err(|e| RunError::Data(format!("sankey flow not conserved: {e}")))?;
        write_file(&dir.join(SANKEY_JSON), (serde_json::to_string_pretty(&s).expect("serializable") + "\n").as_bytes())?;
        write_file(&dir.join(SANKEY_HTML), sankey_html(&s).as_bytes())?;
    }
    if opts.pathways {
        let map = commonest_pathways(&transcripts);
        write_file(&dir.join(PATHWAYS_JSON), (serde_json::to_string_pretty(&map).expect("serializable") + "\n").as_bytes())?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests;
