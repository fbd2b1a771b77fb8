//! Command-line surface for dxpath.
//!
//! Every subcommand flag can also be set from a TOML file passed with
//! `--config`; keys are the long flag names under a table named after the
//! subcommand. Flags given on the command line win.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dxpath_core::analysis::fixtures::pathway_map_fixtures;
use dxpath_core::analysis::{commonest_pathways, distance_matrix, format_metric, DistanceMatrix, PathwayMap, PathwayString};
use dxpath_core::dialogue::{EpisodeConfig, RepeatPolicy};
use dxpath_core::dtree::{load_tree, render_rules, DecisionTree, RuleTemplate, DEFAULT_TREE_TOML};
use dxpath_core::gateway::{EndpointConfig, MockFault, Mode, Persona, PromptConfig};
use dxpath_core::run::{
    default_run_id, evaluate_run, execute_run, interactive_session, EvalOptions, PolicySpec, RunError, RunManifest, RunSpec,
    REPORT_TXT,
};
use dxpath_core::synth::{generate, read_dataset_dir, write_dataset_dir, SynthConfig, SynthError};
use dxpath_core::{features_markdown, Diagnosis, PatientRecord, Terminal};

mod config;

pub use config::{apply_config, ConfigError};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable inputs, invalid configuration: exit 1.
    Config(String),
    /// Failures while running: exit 2.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        if e.exit_code() == 1 {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(
    name = "dxpath",
    version,
    about = "Step-by-step diagnosis dialogues against an executable decision tree",
    args_override_self = true
)]
pub struct Cli {
    /// TOML file with default flag values, one table per subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic patient dataset.
    Synth(SynthArgs),
    /// Run a policy over a dataset and persist the transcripts.
    Run(RunArgs),
    /// Recompute metrics for a persisted run.
    Eval(EvalArgs),
    /// Average pathway distances between two or more pathway maps.
    Compare(CompareArgs),
    /// Answer a policy's lab requests at the terminal.
    Interactive(InteractiveArgs),
    /// Decision tree utilities.
    #[command(subcommand)]
    Dtree(DtreeCommand),
    /// Print the feature reference.
    Features {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum DtreeCommand {
    /// Load and check a tree spec.
    Validate { path: Option<PathBuf> },
    /// Print the rules text generated from a tree spec.
    Rules { path: Option<PathBuf> },
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Tree spec; the shipped tree when omitted.
    #[arg(long)]
    pub tree: Option<PathBuf>,
    #[arg(long, default_value_t = 70_000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// `class=weight` pairs; unlisted classes get weight 0.
    #[arg(long, value_delimiter = ',')]
    pub class_weights: Vec<String>,
    /// Chance that a feature off the patient's path is unavailable.
    #[arg(long, default_value_t = 0.0)]
    pub background_missing: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyKind {
    Tree,
    Noisy,
    Mock,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PersonaArg {
    None,
    Assistant,
    Clinician,
}

#[derive(Debug, Args)]
pub struct PolicyArgs {
    #[arg(long)]
    pub tree: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PolicyKind::Tree)]
    pub policy: PolicyKind,
    /// Noisy policy: chance of taking a wrong numeric branch.
    #[arg(long, default_value_t = 0.2)]
    pub rate: f64,
    /// Noisy policy seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// plain, plain-cot, sequential or sequential-cot.
    #[arg(long, default_value = "sequential-cot")]
    pub prompt: String,
    #[arg(long)]
    pub shots: Option<usize>,
    #[arg(long, value_enum)]
    pub persona: Option<PersonaArg>,
    #[arg(long)]
    pub no_rules: bool,
    /// Mock faults: `none`, a JSON array, or a path to one.
    #[arg(long, default_value = "none")]
    pub faults: String,
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub llm_seed: Option<u64>,
    #[arg(long)]
    pub timeout_secs: Option<f64>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    #[arg(long)]
    pub backoff_ms: Option<u64>,
    #[arg(long)]
    pub rpm: Option<u32>,
    #[arg(long, default_value_t = 20)]
    pub max_turns: usize,
    /// allow, warn or terminate-after:K.
    #[arg(long, default_value = "allow")]
    pub repeat_policy: String,
    #[arg(long, default_value_t = 1)]
    pub malformed_retries: usize,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Dataset directory or CSV file.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long)]
    pub take_first: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    #[arg(long, default_value = "runs")]
    pub runs_dir: PathBuf,
    #[arg(long)]
    pub run_id: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run directory.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub errors: bool,
    #[arg(long)]
    pub sankey: bool,
    #[arg(long)]
    pub pathways: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Pathway map JSON files, run directories, or `fixture:<name>`.
    pub maps: Vec<String>,
    /// Add the shipped decision-tree and DQN maps.
    #[arg(long)]
    pub fixtures: bool,
    /// Also write the matrix as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InteractiveArgs {
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long, default_value = "operator")]
    pub patient_id: String,
    #[arg(long, default_value = "runs")]
    pub runs_dir: PathBuf,
    #[arg(long)]
    pub run_id: Option<String>,
}

/// Parse and run; returns the process exit code.
pub fn main_with(args: Vec<OsString>, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let args = match apply_config(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return 1;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(stdout, "{text}") } else { write!(stderr, "{text}") };
            return code;
        }
    };
    match dispatch(cli.command, stdin, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message());
            e.exit_code()
        }
    }
}

pub fn dispatch(cmd: Command, stdin: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::Synth(a) => cmd_synth(&a, out),
        Command::Run(a) => cmd_run(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Compare(a) => cmd_compare(&a, out),
        Command::Interactive(a) => cmd_interactive(&a, stdin, out),
        Command::Dtree(DtreeCommand::Validate { path }) => {
            let t = read_tree(path.as_deref())?;
            let paths = t.paths();
            say(
                out,
                &format!(
                    "ok: {} nodes, {} paths, depth {}, {} classes reachable\ndigest {}\n",
                    t.node_count(),
                    paths.len(),
                    t.depth(),
                    t.leaf_diagnoses().len(),
                    t.digest()
                ),
            )
        }
        Command::Dtree(DtreeCommand::Rules { path }) => {
            let t = read_tree(path.as_deref())?;
            say(out, &render_rules(&t, &RuleTemplate::default()))
        }
        Command::Features { out: None } => say(out, &features_markdown()),
        Command::Features { out: Some(p) } => fs::write(&p, features_markdown()).map_err(|e| io_err(&p, e)),
    }
}

fn say(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::Runtime(format!("writing output: {e}")))
}

pub fn read_tree(path: Option<&Path>) -> Result<DecisionTree, CliError> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| io_err(p, e))?,
        None => DEFAULT_TREE_TOML.to_string(),
    };
    let label = path.map_or("shipped tree".to_string(), |p| p.display().to_string());
    load_tree(&text).map_err(|e| CliError::Config(format!("{label}: {e}")))
}

fn read_patients(path: &Path) -> Result<Vec<PatientRecord>, CliError> {
    read_dataset_dir(path).map(|(p, _)| p).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn parse_class_weights(items: &[String]) -> Result<BTreeMap<Diagnosis, f64>, CliError> {
    if items.is_empty() {
        return Ok(SynthConfig::default().class_weights);
    }
    let mut w: BTreeMap<Diagnosis, f64> = Diagnosis::ALL.into_iter().map(|d| (d, 0.0)).collect();
    for item in items {
        let (name, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("class weight `{item}` is not of the form class=weight")))?;
        let d = Diagnosis::from_canonical(name.trim()).ok_or_else(|| CliError::Config(format!("unknown class `{name}`")))?;
        let v: f64 = value.trim().parse().map_err(|_| CliError::Config(format!("weight `{value}` is not a number")))?;
        w.insert(d, v);
    }
    Ok(w)
}

fn synth_error(e: SynthError) -> CliError {
    match e {
        SynthError::OracleMismatch { .. } => CliError::Runtime(e.to_string()),
        _ => CliError::Config(e.to_string()),
    }
}

pub fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let tree = read_tree(a.tree.as_deref())?;
    let config = SynthConfig {
        n_patients: a.n,
        class_weights: parse_class_weights(&a.class_weights)?,
        seed: a.seed,
        background_missing: a.background_missing,
        ..SynthConfig::default()
    };
    let ds = generate(&tree, &config).map_err(synth_error)?;
    write_dataset_dir(&ds, &a.out).map_err(|e| CliError::Runtime(format!("{}: {e}", a.out.display())))?;
    let mut text = format!("wrote {} patients to {}\n", ds.len(), a.out.display());
    for (d, n) in ds.class_histogram() {
        text.push_str(&format!("{:<36} {n:>7}\n", d.canonical_name()));
    }
    say(out, &text)
}

fn parse_repeat_policy(s: &str) -> Result<RepeatPolicy, CliError> {
    match s {
        "allow" => Ok(RepeatPolicy::Allow),
        "warn" => Ok(RepeatPolicy::Warn),
        _ => s
            .strip_prefix("terminate-after:")
            .and_then(|k| k.parse().ok())
            .map(RepeatPolicy::TerminateAfter)
            .ok_or_else(|| CliError::Config(format!("unknown repeat policy `{s}`"))),
    }
}

fn parse_faults(s: &str) -> Result<Vec<MockFault>, CliError> {
    let text = match s.trim() {
        "none" | "" => return Ok(Vec::new()),
        t if t.starts_with('[') => t.to_string(),
        p => fs::read_to_string(p).map_err(|e| io_err(Path::new(p), e))?,
    };
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("faults: {e}")))
}

pub fn prompt_config(a: &PolicyArgs, tree: &DecisionTree) -> Result<PromptConfig, CliError> {
    let (mode, cot) = match a.prompt.as_str() {
        "plain" => (Mode::Plain, false),
        "plain-cot" => (Mode::Plain, true),
        "sequential" => (Mode::Sequential, false),
        "sequential-cot" => (Mode::Sequential, true),
        other => return Err(CliError::Config(format!("unknown prompt preset `{other}`"))),
    };
    let mut p = PromptConfig::for_tree(tree, mode).map_err(|e| CliError::Config(e.to_string()))?;
    p.include_cot = cot;
    p.include_rules = !a.no_rules;
    if let Some(persona) = a.persona {
        p.persona = match persona {
            PersonaArg::None => Persona::None,
            PersonaArg::Assistant => Persona::AiAssistant,
            PersonaArg::Clinician => Persona::Clinician,
        };
    }
    if let Some(n) = a.shots {
        if ![0, 1, 3].contains(&n) {
            return Err(CliError::Config(format!("--shots must be 0, 1 or 3, got {n}")));
        }
        p.set_shots(tree, n).map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(p)
}

fn endpoint_config(a: &PolicyArgs) -> EndpointConfig {
    let d = EndpointConfig::default();
    EndpointConfig {
        base_url: a.base_url.clone().unwrap_or(d.base_url),
        model_name: a.model.clone().unwrap_or(d.model_name),
        api_key_env: a.api_key_env.clone(),
        temperature: a.temperature.unwrap_or(d.temperature),
        seed: a.llm_seed,
        timeout_secs: a.timeout_secs.unwrap_or(d.timeout_secs),
        max_retries: a.max_retries.unwrap_or(d.max_retries),
        backoff_ms: a.backoff_ms.unwrap_or(d.backoff_ms),
        requests_per_minute: a.rpm,
        request_log_path: None,
    }
}

pub fn policy_spec(a: &PolicyArgs, tree: &DecisionTree) -> Result<PolicySpec, CliError> {
    Ok(match a.policy {
        PolicyKind::Tree => PolicySpec::Tree,
        PolicyKind::Noisy => PolicySpec::Noisy { rate: a.rate, seed: a.seed },
        PolicyKind::Mock => PolicySpec::Mock { prompt: prompt_config(a, tree)?, faults: parse_faults(&a.faults)? },
        PolicyKind::Llm => PolicySpec::Llm { endpoint: endpoint_config(a), prompt: prompt_config(a, tree)? },
    })
}

fn episode_config(a: &PolicyArgs, tree: &DecisionTree) -> Result<EpisodeConfig, CliError> {
    Ok(EpisodeConfig {
        max_turns: a.max_turns,
        repeat_policy: parse_repeat_policy(&a.repeat_policy)?,
        malformed_retries: a.malformed_retries,
        ..EpisodeConfig::for_tree(tree)
    })
}

pub fn cmd_run(a: &RunArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let tree = Arc::new(read_tree(a.policy.tree.as_deref())?);
    let patients = read_patients(&a.data)?;
    let spec = RunSpec {
        runs_dir: a.runs_dir.clone(),
        run_id: a.run_id.clone(),
        take_first: a.take_first,
        parallel: a.parallel,
        episode: episode_config(&a.policy, &tree)?,
        policy: policy_spec(&a.policy, &tree)?,
    };
    let outcome = execute_run(tree, &patients, &spec)?;
    say(out, &format!("{} transcripts written to {}\n", outcome.transcripts.len(), outcome.dir.display()))?;
    if let Some((patient, fault)) = outcome.fault {
        return Err(CliError::Runtime(format!(
            "run stopped at {patient}: {fault}; partial results kept in {}",
            outcome.dir.display()
        )));
    }
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let patients = read_patients(&a.data)?;
    let opts = EvalOptions { errors: a.errors, sankey: a.sankey, pathways: a.pathways };
    evaluate_run(&a.run, &patients, opts)?;
    let text = fs::read_to_string(a.run.join(REPORT_TXT)).map_err(|e| io_err(&a.run, e))?;
    say(out, &text)
}

fn load_map(source: &str) -> Result<(String, PathwayMap), CliError> {
    if let Some(name) = source.strip_prefix("fixture:") {
        return pathway_map_fixtures()
            .into_iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| CliError::Config(format!("no shipped pathway map named `{name}`")));
    }
    let path = Path::new(source);
    let name = path.file_stem().map_or(source.to_string(), |s| s.to_string_lossy().into_owned());
    if path.is_dir() {
        let (_, _, transcripts) = RunManifest::load(path)?;
        return Ok((name, commonest_pathways(&transcripts)));
    }
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let map: PathwayMap = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{source}: {e}")))?;
    Ok((name, map))
}

/// Distance matrix rendered as text, `n/a` where two maps share no class.
pub fn render_matrix(names: &[String], m: &[Vec<Option<f64>>]) -> String {
    let w = names.iter().map(String::len).max().unwrap_or(0).max(4);
    let mut s = format!("{:<w$}", "");
    for n in names {
        s.push_str(&format!(" | {n:>w$}"));
    }
    s.push('\n');
    for (i, n) in names.iter().enumerate() {
        s.push_str(&format!("{n:<w$}"));
        for v in &m[i] {
            let cell = v.map_or("n/a".to_string(), format_metric);
            s.push_str(&format!(" | {cell:>w$}"));
        }
        s.push('\n');
    }
    s
}

pub fn compare_maps(a: &CompareArgs) -> Result<(Vec<String>, DistanceMatrix), CliError> {
    let mut maps = Vec::new();
    for src in &a.maps {
        maps.push(load_map(src)?);
    }
    if a.fixtures {
        for name in ["decision_tree", "dqn"] {
            if !maps.iter().any(|(n, _): &(String, PathwayMap)| n == name) {
                maps.push(load_map(&format!("fixture:{name}"))?);
            }
        }
    }
    if maps.len() < 2 {
        return Err(CliError::Config("compare needs at least two pathway maps".into()));
    }
    let m = distance_matrix(&maps);
    Ok((maps.into_iter().map(|(n, _)| n).collect(), m))
}

pub fn cmd_compare(a: &CompareArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let (names, m) = compare_maps(a)?;
    if let Some(p) = &a.out {
        let json = serde_json::json!({ "models": names, "distances": m });
        fs::write(p, serde_json::to_string_pretty(&json).expect("serializable") + "\n").map_err(|e| io_err(p, e))?;
    }
    say(out, &render_matrix(&names, &m))
}

pub fn cmd_interactive(a: &InteractiveArgs, stdin: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), CliError> {
    let tree = Arc::new(read_tree(a.policy.tree.as_deref())?);
    let policy = policy_spec(&a.policy, &tree)?;
    let episode = episode_config(&a.policy, &tree)?;
    let run_id = a.run_id.clone().unwrap_or_else(|| default_run_id("interactive"));
    let (transcript, dir) = interactive_session(tree, &policy, &episode, &a.patient_id, &a.runs_dir, &run_id, stdin, &mut *out)?;
    let pathway = PathwayString::of(&transcript.outcome);
    let ending = match &transcript.outcome.terminal {
        Terminal::Diagnosis(d) => format!("Diagnosis: {}", d.display_name()),
        Terminal::Failure(r) => format!("No diagnosis ({r:?})"),
    };
    let requested: Vec<&str> = transcript.outcome.requests.iter().map(|f| f.display_name()).collect();
    say(out, &format!("{ending}\nPathway: {} ({})\nSaved to {}\n", requested.join(" -> "), pathway, dir.display()))
}
