use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    now, sha256_hex, write_file, write_transcripts, PolicyDescriptor, PolicySpec, RunError, TRANSCRIPTS_FILE, TREE_FILE,
};
use crate::dialogue::{run_episode_with, EpisodeConfig, FeatureSource};
use crate::domain::{FeatureId, FeatureKind, FeatureValue, FeatureValues, Transcript};
use crate::dtree::DecisionTree;
use crate::gateway::Mode;

pub const SESSION_FILE: &str = "session.json";

/// Parse what an operator typed for `feature`.
pub fn parse_value_input(feature: FeatureId, text: &str) -> Result<FeatureValue, String> {
    let t = text.trim();
    if t.is_empty() {
        return Err("enter a value or `unavailable`".into());
    }
    if t.eq_ignore_ascii_case("unavailable") || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("n/a") {
        return Ok(FeatureValue::Unavailable);
    }
    let v = match feature.kind() {
        FeatureKind::Numeric => {
            let num = t.split_whitespace().next().unwrap_or(t);
            match num.parse::<f64>() {
                Ok(x) => FeatureValue::Numeric(x),
                Err(_) => return Err(format!("`{t}` is not a number")),
            }
        }
        FeatureKind::Categorical => FeatureValue::Categorical(t.to_ascii_lowercase()),
    };
    v.check_for(feature)?;
    Ok(v)
}

/// Answers feature requests from an operator. End of input closes the
/// source, which aborts the episode.
pub struct TerminalSource<R, W> {
    input: R,
    output: W,
}

impl<R: BufRead, W: Write> TerminalSource<R, W> {
    pub fn new(input: R, output: W) -> Self {
        TerminalSource { input, output }
    }

    fn prompt(&mut self, feature: FeatureId) {
        let hint = match feature.kind() {
            FeatureKind::Numeric if !feature.unit().is_empty() => format!(" [{}]", feature.unit()),
            FeatureKind::Numeric => String::new(),
            FeatureKind::Categorical => format!(" [{}]", feature.categories().join("/")),
        };
        let _ = write!(self.output, "Requested: {}{hint}\n> ", feature.display_name());
        let _ = self.output.flush();
    }
}

impl<R: BufRead, W: Write> FeatureSource for TerminalSource<R, W> {
    fn provide(&mut self, feature: FeatureId) -> Option<FeatureValue> {
        loop {
            self.prompt(feature);
            let mut line = String::new();
            match self.input.read_line(&mut line) {
                Ok(0) | Err(_) => {
                    let _ = writeln!(self.output);
                    return None;
                }
                Ok(_) => {}
            }
            match parse_value_input(feature, &line) {
                Ok(v) => return Some(v),
                Err(e) => {
                    let _ = writeln!(self.output, "Invalid input: {e}");
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub run_id: String,
    pub tree_digest: String,
    pub policy: PolicyDescriptor,
    pub episode: EpisodeConfig,
    pub started: String,
    pub finished: String,
    pub transcripts_digest: String,
}

/// Run one operator-answered episode and persist it under
/// `runs_dir/<run_id>/`.
#[allow(clippy::too_many_arguments)]
pub fn interactive_session<R: BufRead, W: Write>(
    tree: Arc<DecisionTree>,
    policy: &PolicySpec,
    episode: &EpisodeConfig,
    patient_id: &str,
    runs_dir: &Path,
    run_id: &str,
    input: R,
    output: W,
) -> Result<(Transcript, PathBuf), RunError> {
    policy.validate().map_err(RunError::Config)?;
    episode.validate().map_err(RunError::Config)?;
    if let PolicySpec::Mock { prompt, .. } | PolicySpec::Llm { prompt, .. } = policy {
        if prompt.mode == Mode::Plain {
            return Err(RunError::Config("interactive sessions need a sequential prompt".into()));
        }
    }
    fs::create_dir_all(runs_dir).map_err(|e| RunError::io(runs_dir, e))?;
    let dir = runs_dir.join(run_id);
    fs::create_dir(&dir).map_err(|e| RunError::io(&dir, e))?;
    write_file(&dir.join(TREE_FILE), tree.to_spec_toml().as_bytes())?;
    let log = dir.join(super::REQUEST_LOG_FILE);
    let factory = policy.factory(&tree, Some(&log))?;
    let mut diag = factory.build(patient_id, &FeatureValues::unavailable());
    let started = now();
    let mut source = TerminalSource::new(input, output);
    let (transcript, fault) = match run_episode_with(patient_id, &mut source, diag.as_mut(), episode) {
        Ok(t) => (t, None),
        Err(e) => (e.partial, Some(e.fault)),
    };
    let mut buf = Vec::new();
    write_transcripts(std::slice::from_ref(&transcript), &mut buf).map_err(|e| RunError::io(&dir, e))?;
    write_file(&dir.join(TRANSCRIPTS_FILE), &buf)?;
    let record = SessionRecord {
        run_id: run_id.to_string(),
        tree_digest: tree.digest().to_string(),
        policy: policy.descriptor(),
        episode: episode.clone(),
        started,
        finished: now(),
        transcripts_digest: sha256_hex(&buf),
    };
    write_file(&dir.join(SESSION_FILE), (serde_json::to_string_pretty(&record).expect("serializable") + "\n").as_bytes())?;
    if let Some(fault) = fault {
        return Err(RunError::Endpoint { patient: patient_id.to_string(), fault });
    }
    Ok((transcript, dir))
}
