//! Closed-vocabulary name matching for features and diagnoses.
//!
//! Text is normalized to lowercase alphanumeric tokens before matching, so
//! punctuation, markdown and underscores never matter. Matching scans for
//! the leftmost-longest alias at each token position.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Diagnosis, FeatureId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseNameError {
    #[error("`{0}` does not name a known {1}")]
    NoMatch(String, &'static str),
    #[error("`{text}` matches more than one {what}: {candidates:?}")]
    AmbiguousMatch { text: String, what: &'static str, candidates: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AliasError {
    #[error("alias `{alias}` maps to both {first} and {second}")]
    Conflict { alias: String, first: String, second: String },
    #[error("alias `{0}` is empty after normalization")]
    Empty(String),
    #[error("unknown alias target `{0}`")]
    UnknownTarget(String),
}

/// Lowercase, strip punctuation, collapse whitespace. British spellings are
/// folded onto the American ones used throughout the vocabulary.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for token in tokens(text) {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&token);
    }
    out
}

fn tokens(text: &str) -> Vec<String> {
    let lowered: String = text
        .chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { ' ' })
        .flat_map(|c| c.to_lowercase())
        .collect();
    lowered
        .split_whitespace()
        .map(|t| match t {
            "anaemia" => "anemia".to_string(),
            "haemoglobin" => "hemoglobin".to_string(),
            "haemolytic" => "hemolytic".to_string(),
            other => other.to_string(),
        })
        .collect()
}

const FEATURE_ALIASES: &[(FeatureId, &[&str])] = &[
    (FeatureId::Hemoglobin, &["hgb", "hb", "hemoglobin level", "hemoglobin value"]),
    (FeatureId::Gender, &["sex"]),
    (FeatureId::Mcv, &["mean cell volume", "mcv value"]),
    (FeatureId::Ferritin, &["serum ferritin", "ferritin level"]),
    (FeatureId::ReticulocyteCount, &["reticulocytes", "reticulocyte", "retic count", "retic", "reticulocyte percentage"]),
    (FeatureId::SegmentedNeutrophils, &["segs", "hypersegmented neutrophils", "neutrophil segmentation", "segmented neutrophil"]),
    (FeatureId::Tibc, &["iron binding capacity"]),
    (FeatureId::Hematocrit, &["hct", "packed cell volume"]),
    (FeatureId::Tsat, &["transferrin saturation percentage", "transferrin sat"]),
    (FeatureId::Rbc, &["red blood cell count", "rbc count", "red blood cell", "erythrocytes", "red cell count"]),
    (FeatureId::SerumIron, &["iron level", "serum iron level"]),
    (FeatureId::Folate, &["folic acid", "serum folate", "folate level"]),
    (FeatureId::Creatinine, &["serum creatinine"]),
    (FeatureId::Cholesterol, &["total cholesterol"]),
    (FeatureId::Copper, &["serum copper"]),
    (FeatureId::Ethanol, &["alcohol", "blood alcohol"]),
    (FeatureId::Glucose, &["blood glucose", "blood sugar"]),
];

const DIAGNOSIS_ALIASES: &[(Diagnosis, &[&str])] = &[
    (Diagnosis::NoAnemia, &["not anemic", "no anemia present", "absence of anemia"]),
    (
        Diagnosis::VitaminB12FolateDeficiencyAnemia,
        &[
            "b12 deficiency",
            "vitamin b12 deficiency",
            "folate deficiency",
            "b12 folate deficiency",
            "vitamin b12 folate deficiency",
            "megaloblastic anemia",
            "vitamin b12 folate deficiency anemia",
            "b12 folate deficiency anemia",
        ],
    ),
    (Diagnosis::UnspecifiedAnemia, &["unspecified"]),
    (
        Diagnosis::AnemiaOfChronicDisease,
        &["acd", "anemia of chronic disease", "anemia of chronic inflammation", "chronic disease anemia"],
    ),
    (Diagnosis::IronDeficiencyAnemia, &["ida", "iron deficiency anemia", "iron deficiency"]),
    (Diagnosis::HemolyticAnemia, &["hemolytic"]),
    (Diagnosis::AplasticAnemia, &["aplastic"]),
    (Diagnosis::InconclusiveDiagnosis, &["inconclusive"]),
];

/// Alias index mapping normalized token sequences onto ids.
#[derive(Debug, Clone)]
pub struct Vocabulary<T> {
    exact: HashMap<String, T>,
    // first token -> (tokens, id), longest first
    by_head: HashMap<String, Vec<(Vec<String>, T)>>,
    what: &'static str,
}

/// A mention of a vocabulary item inside free text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mention<T> {
    pub id: T,
    /// Token offset of the first token.
    pub start: usize,
    pub len: usize,
}

impl<T: Copy + Eq + Ord + std::fmt::Debug> Vocabulary<T> {
    fn build(
        what: &'static str,
        entries: impl IntoIterator<Item = (String, T)>,
        name_of: impl Fn(T) -> String,
    ) -> Result<Self, AliasError> {
        let mut exact: HashMap<String, T> = HashMap::new();
        for (alias, id) in entries {
            let norm = normalize(&alias);
            if norm.is_empty() {
                return Err(AliasError::Empty(alias));
            }
            match exact.get(&norm) {
                Some(prev) if *prev != id => {
                    return Err(AliasError::Conflict { alias: norm, first: name_of(*prev), second: name_of(id) })
                }
                _ => {
                    exact.insert(norm, id);
                }
            }
        }
        let mut by_head: HashMap<String, Vec<(Vec<String>, T)>> = HashMap::new();
        for (alias, id) in &exact {
            let toks: Vec<String> = alias.split(' ').map(str::to_string).collect();
            by_head.entry(toks[0].clone()).or_default().push((toks, *id));
        }
        for list in by_head.values_mut() {
            list.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        }
        Ok(Vocabulary { exact, by_head, what })
    }

    /// All aliases as (normalized alias, id) pairs, sorted.
    pub fn aliases(&self) -> Vec<(String, T)> {
        let mut v: Vec<(String, T)> = self.exact.iter().map(|(k, v)| (k.clone(), *v)).collect();
        v.sort();
        v
    }

    /// Leftmost-longest, non-overlapping mentions in reading order.
    pub fn mentions(&self, text: &str) -> Vec<Mention<T>> {
        let toks = tokens(text);
        let mut out = Vec::new();
        let mut i = 0;
        while i < toks.len() {
            let hit = self.by_head.get(&toks[i]).and_then(|cands| {
                cands.iter().find(|(alias, _)| alias.len() <= toks.len() - i && alias.iter().zip(&toks[i..]).all(|(a, t)| a == t))
            });
            match hit {
                Some((alias, id)) => {
                    out.push(Mention { id: *id, start: i, len: alias.len() });
                    i += alias.len();
                }
                None => i += 1,
            }
        }
        out
    }

    /// Exact match of the whole normalized text against an alias.
    pub fn exact(&self, text: &str) -> Option<T> {
        self.exact.get(&normalize(text)).copied()
    }

    /// Exact alias match first; otherwise the text must mention exactly one id.
    pub fn parse(&self, text: &str) -> Result<T, ParseNameError> {
        let norm = normalize(text);
        if let Some(id) = self.exact.get(&norm) {
            return Ok(*id);
        }
        let ids: BTreeSet<T> = self.mentions(text).into_iter().map(|m| m.id).collect();
        match ids.len() {
            0 => Err(ParseNameError::NoMatch(text.trim().to_string(), self.what)),
            1 => Ok(*ids.iter().next().unwrap()),
            _ => Err(ParseNameError::AmbiguousMatch {
                text: text.trim().to_string(),
                what: self.what,
                candidates: ids.iter().map(|id| format!("{id:?}")).collect(),
            }),
        }
    }
}

/// Override aliases, keyed by canonical name. Typically read from a config file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasOverrides {
    #[serde(default)]
    pub features: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub diagnoses: BTreeMap<String, Vec<String>>,
}

/// Feature and diagnosis vocabularies together.
#[derive(Debug, Clone)]
pub struct AliasTable {
    pub features: Vocabulary<FeatureId>,
    pub diagnoses: Vocabulary<Diagnosis>,
}

impl AliasTable {
    pub fn builtin() -> &'static AliasTable {
        static TABLE: OnceLock<AliasTable> = OnceLock::new();
        TABLE.get_or_init(|| AliasTable::with_overrides(&AliasOverrides::default()).expect("builtin alias table is injective"))
    }

    pub fn with_overrides(overrides: &AliasOverrides) -> Result<AliasTable, AliasError> {
        let mut feature_entries: Vec<(String, FeatureId)> = Vec::new();
        for f in FeatureId::ALL {
            feature_entries.push((f.canonical_name().to_string(), f));
            feature_entries.push((f.display_name().to_string(), f));
        }
        for (f, aliases) in FEATURE_ALIASES {
            feature_entries.extend(aliases.iter().map(|a| (a.to_string(), *f)));
        }
        for (name, aliases) in &overrides.features {
            let f = FeatureId::from_canonical(name).ok_or_else(|| AliasError::UnknownTarget(name.clone()))?;
            feature_entries.extend(aliases.iter().map(|a| (a.clone(), f)));
        }

        let mut diagnosis_entries: Vec<(String, Diagnosis)> = Vec::new();
        for d in Diagnosis::ALL {
            diagnosis_entries.push((d.canonical_name().to_string(), d));
            diagnosis_entries.push((d.display_name().to_string(), d));
        }
        for (d, aliases) in DIAGNOSIS_ALIASES {
            diagnosis_entries.extend(aliases.iter().map(|a| (a.to_string(), *d)));
        }
        for (name, aliases) in &overrides.diagnoses {
            let d = Diagnosis::from_canonical(name).ok_or_else(|| AliasError::UnknownTarget(name.clone()))?;
            diagnosis_entries.extend(aliases.iter().map(|a| (a.clone(), d)));
        }

        Ok(AliasTable {
            features: Vocabulary::build("feature", feature_entries, |f: FeatureId| f.canonical_name().to_string())?,
            diagnoses: Vocabulary::build("diagnosis", diagnosis_entries, |d: Diagnosis| d.canonical_name().to_string())?,
        })
    }

    pub fn parse_feature(&self, text: &str) -> Result<FeatureId, ParseNameError> {
        self.features.parse(text)
    }

    pub fn parse_diagnosis(&self, text: &str) -> Result<Diagnosis, ParseNameError> {
        self.diagnoses.parse(text)
    }
}

/// Match free text against the built-in feature vocabulary.
pub fn parse_feature_name(text: &str) -> Result<FeatureId, ParseNameError> {
    AliasTable::builtin().parse_feature(text)
}

/// Match free text against the built-in diagnosis vocabulary.
pub fn parse_diagnosis_name(text: &str) -> Result<Diagnosis, ParseNameError> {
    AliasTable::builtin().parse_diagnosis(text)
}
