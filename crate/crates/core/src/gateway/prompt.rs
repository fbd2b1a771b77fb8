use serde::{Deserialize, Serialize};

use crate::domain::{Diagnosis, FeatureId, FeatureValues};
use crate::dtree::{render_one_shot_example, render_rules, DecisionTree, RuleTemplate, TreeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Plain,
    #[default]
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Persona {
    None,
    AiAssistant,
    #[default]
    Clinician,
}

impl Persona {
    pub fn sentence(self) -> Option<&'static str> {
        match self {
            Persona::None => None,
            Persona::AiAssistant => Some(
                "You are an AI assistant that helps decide whether a patient has anemia and, if so, which type of anemia it is.",
            ),
            Persona::Clinician => Some(
                "You are a clinician who is skilled in assessing whether a patient has anemia and, if so, which type of anemia the patient has.",
            ),
        }
    }
}

pub const COT_INSTRUCTION: &str = "Before answering, explain, step by step, every lab test you took into consideration. \
State each comparison on its own line in the form `<test> <value> is <less than|greater than|less than or equal to|greater than or equal to> <threshold>.`";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub mode: Mode,
    pub persona: Persona,
    /// 0, 1 or 3.
    pub shots: usize,
    pub include_rules: bool,
    pub include_cot: bool,
    pub class_list: Vec<String>,
    pub rules_text: String,
    pub example_text: String,
    /// Features the model may request in sequential mode.
    pub allowed_features: Vec<FeatureId>,
}

impl PromptConfig {
    /// Defaults for `tree`: clinician persona, one shot, rules and CoT on.
    pub fn for_tree(tree: &DecisionTree, mode: Mode) -> Result<Self, TreeError> {
        let mut cfg = PromptConfig {
            mode,
            persona: Persona::Clinician,
            shots: 1,
            include_rules: true,
            include_cot: true,
            class_list: Diagnosis::ALL.iter().map(|d| d.display_name().to_string()).collect(),
            rules_text: render_rules(tree, &RuleTemplate::default().without_example()),
            example_text: String::new(),
            allowed_features: tree.features(),
        };
        cfg.set_shots(tree, 1)?;
        Ok(cfg)
    }

    /// Regenerate `example_text` for `shots` examples.
    pub fn set_shots(&mut self, tree: &DecisionTree, shots: usize) -> Result<(), TreeError> {
        let chosen: Vec<Diagnosis> = match shots {
            0 => Vec::new(),
            1 => vec![tree.example().map(|e| e.diagnosis).unwrap_or_else(|| tree.leaf_diagnoses()[0])],
            _ => tree.leaf_diagnoses().into_iter().take(shots).collect(),
        };
        let mut sentences = Vec::with_capacity(chosen.len());
        for d in chosen {
            sentences.push(render_one_shot_example(tree, d)?);
        }
        self.shots = shots;
        self.example_text = sentences.join("\n");
        Ok(())
    }

    pub fn validate(&self) -> Result<(), String> {
        if ![0, 1, 3].contains(&self.shots) {
            return Err(format!("shots must be 0, 1 or 3, got {}", self.shots));
        }
        if self.class_list.is_empty() {
            return Err("class list is empty".into());
        }
        if self.mode == Mode::Sequential && self.allowed_features.is_empty() {
            return Err("sequential mode needs at least one allowed feature".into());
        }
        Ok(())
    }
}

fn common_sections(config: &PromptConfig) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(p) = config.persona.sentence() {
        out.push(p.to_string());
    }
    let mut classes = String::from("The diagnosis must be exactly one of the following classes:");
    for c in &config.class_list {
        classes.push_str("\n- ");
        classes.push_str(c);
    }
    out.push(classes);
    if config.include_rules && !config.rules_text.is_empty() {
        out.push(format!("Use the following rules:\n{}", config.rules_text.trim_end()));
    }
    if config.shots > 0 && !config.example_text.is_empty() {
        out.push(config.example_text.clone());
    }
    if config.include_cot {
        out.push(COT_INSTRUCTION.to_string());
    }
    out
}

/// Single prompt with every feature of the patient.
pub fn build_plain_prompt(config: &PromptConfig, values: &FeatureValues) -> String {
    let mut sections = common_sections(config);
    let listing: Vec<String> = values.iter().map(|(f, v)| v.render(f)).collect();
    sections.push(format!("Patient data:\n{}", listing.join("\n")));
    sections.push("End your reply with one line of the form `DIAGNOSIS: <class>`.".to_string());
    sections.join("\n\n") + "\n"
}

/// System prompt for the one-feature-per-turn dialogue.
pub fn build_sequential_system_prompt(config: &PromptConfig) -> String {
    let mut sections = common_sections(config);
    let names: Vec<&str> = config.allowed_features.iter().map(|f| f.display_name()).collect();
    sections.push(format!(
        "You do not see the patient's data up front. Request one lab test at a time; you may request only these tests:\n- {}",
        names.join("\n- ")
    ));
    sections.push(
        "Each reply must end with exactly one line, either `REQUEST: <test>` to ask for one test, \
or `DIAGNOSIS: <class>` once you have decided."
            .to_string(),
    );
    sections.join("\n\n") + "\n"
}

/// First user message of a sequential episode.
pub const SEQUENTIAL_OPENER: &str = "A new patient has arrived. Which test do you want to see first?";
