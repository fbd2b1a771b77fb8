//! Shared vocabulary: features, diagnoses, patients, pathways and transcripts.

mod diagnosis;
mod feature;
mod names;
mod patient;
mod transcript;
mod value;

pub use diagnosis::Diagnosis;
pub use feature::{features_markdown, FeatureId, FeatureKind, GENDER_CATEGORIES};
pub use names::{
    normalize, parse_diagnosis_name, parse_feature_name, AliasError, AliasOverrides, AliasTable, Mention, ParseNameError,
    Vocabulary,
};
pub use patient::{FeatureValues, PatientError, PatientRecord};
pub use transcript::{FailureReason, Pathway, Terminal, Transcript, Turn, TurnEvent, TurnRequest};
pub use value::{format_number, FeatureValue};
