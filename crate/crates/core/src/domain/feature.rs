use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the 17 patient features a diagnostician may request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureId {
    Hemoglobin,
    Gender,
    Mcv,
    Ferritin,
    ReticulocyteCount,
    SegmentedNeutrophils,
    Tibc,
    Hematocrit,
    Tsat,
    Rbc,
    SerumIron,
    Folate,
    Creatinine,
    Cholesterol,
    Copper,
    Ethanol,
    Glucose,
}

/// Whether a feature carries a number or a category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

pub const GENDER_CATEGORIES: [&str; 2] = ["male", "female"];

impl FeatureId {
    pub const COUNT: usize = 17;

    pub const ALL: [FeatureId; 17] = [
        FeatureId::Hemoglobin,
        FeatureId::Gender,
        FeatureId::Mcv,
        FeatureId::Ferritin,
        FeatureId::ReticulocyteCount,
        FeatureId::SegmentedNeutrophils,
        FeatureId::Tibc,
        FeatureId::Hematocrit,
        FeatureId::Tsat,
        FeatureId::Rbc,
        FeatureId::SerumIron,
        FeatureId::Folate,
        FeatureId::Creatinine,
        FeatureId::Cholesterol,
        FeatureId::Copper,
        FeatureId::Ethanol,
        FeatureId::Glucose,
    ];

    /// Column order of the dataset CSV: gender first, then the labs.
    pub const CSV_ORDER: [FeatureId; 17] = [
        FeatureId::Gender,
        FeatureId::Hemoglobin,
        FeatureId::Mcv,
        FeatureId::Ferritin,
        FeatureId::ReticulocyteCount,
        FeatureId::SegmentedNeutrophils,
        FeatureId::Tibc,
        FeatureId::Hematocrit,
        FeatureId::Tsat,
        FeatureId::Rbc,
        FeatureId::SerumIron,
        FeatureId::Folate,
        FeatureId::Creatinine,
        FeatureId::Cholesterol,
        FeatureId::Copper,
        FeatureId::Ethanol,
        FeatureId::Glucose,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn canonical_name(self) -> &'static str {
        match self {
            FeatureId::Hemoglobin => "hemoglobin",
            FeatureId::Gender => "gender",
            FeatureId::Mcv => "mcv",
            FeatureId::Ferritin => "ferritin",
            FeatureId::ReticulocyteCount => "reticulocyte_count",
            FeatureId::SegmentedNeutrophils => "segmented_neutrophils",
            FeatureId::Tibc => "tibc",
            FeatureId::Hematocrit => "hematocrit",
            FeatureId::Tsat => "tsat",
            FeatureId::Rbc => "rbc",
            FeatureId::SerumIron => "serum_iron",
            FeatureId::Folate => "folate",
            FeatureId::Creatinine => "creatinine",
            FeatureId::Cholesterol => "cholesterol",
            FeatureId::Copper => "copper",
            FeatureId::Ethanol => "ethanol",
            FeatureId::Glucose => "glucose",
        }
    }

    /// Prose name used in prompts, rules and rendered values.
    pub fn display_name(self) -> &'static str {
        match self {
            FeatureId::Hemoglobin => "hemoglobin",
            FeatureId::Gender => "gender",
            FeatureId::Mcv => "mean corpuscular volume",
            FeatureId::Ferritin => "ferritin",
            FeatureId::ReticulocyteCount => "reticulocyte count",
            FeatureId::SegmentedNeutrophils => "segmented neutrophils",
            FeatureId::Tibc => "total iron binding capacity",
            FeatureId::Hematocrit => "hematocrit",
            FeatureId::Tsat => "transferrin saturation",
            FeatureId::Rbc => "red blood cells",
            FeatureId::SerumIron => "serum iron",
            FeatureId::Folate => "folate",
            FeatureId::Creatinine => "creatinine",
            FeatureId::Cholesterol => "cholesterol",
            FeatureId::Copper => "copper",
            FeatureId::Ethanol => "ethanol",
            FeatureId::Glucose => "glucose",
        }
    }

    /// Unit string; empty for gender.
    pub fn unit(self) -> &'static str {
        match self {
            FeatureId::Hemoglobin => "g/dL",
            FeatureId::Gender => "",
            FeatureId::Mcv => "fL",
            FeatureId::Ferritin => "ng/mL",
            FeatureId::ReticulocyteCount => "%",
            FeatureId::SegmentedNeutrophils => "%",
            FeatureId::Tibc => "µg/dL",
            FeatureId::Hematocrit => "%",
            FeatureId::Tsat => "%",
            FeatureId::Rbc => "10^6/µL",
            FeatureId::SerumIron => "µg/dL",
            FeatureId::Folate => "ng/mL",
            FeatureId::Creatinine => "mg/dL",
            FeatureId::Cholesterol => "mg/dL",
            FeatureId::Copper => "µg/dL",
            FeatureId::Ethanol => "mg/dL",
            FeatureId::Glucose => "mg/dL",
        }
    }

    pub fn kind(self) -> FeatureKind {
        match self {
            FeatureId::Gender => FeatureKind::Categorical,
            _ => FeatureKind::Numeric,
        }
    }

    /// Allowed categories for categorical features, empty otherwise.
    pub fn categories(self) -> &'static [&'static str] {
        match self {
            FeatureId::Gender => &GENDER_CATEGORIES,
            _ => &[],
        }
    }

    /// Look up by exact canonical name.
    pub fn from_canonical(name: &str) -> Option<FeatureId> {
        FeatureId::ALL.into_iter().find(|f| f.canonical_name() == name)
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical_name())
    }
}

impl FromStr for FeatureId {
    type Err = super::ParseNameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        super::parse_feature_name(s)
    }
}

/// Markdown table of the feature vocabulary.
pub fn features_markdown() -> String {
    let mut out = String::from(
        "# Features\n\n\
         Canonical names are the CSV column headers and the identifiers accepted in tree \
         specifications. Display names are what policies see in prompts and dialogue turns.\n\n\
         | Canonical name | Display name | Unit | Kind | Pathway code |\n\
         |---|---|---|---|---|\n",
    );
    for f in FeatureId::ALL {
        let kind = match f.kind() {
            FeatureKind::Numeric => "numeric".to_string(),
            FeatureKind::Categorical => format!("categorical ({})", f.categories().join(", ")),
        };
        let unit = if f.unit().is_empty() { "-" } else { f.unit() };
        out.push_str(&format!(
            "| `{}` | {} | {} | {} | `{}` |\n",
            f.canonical_name(),
            f.display_name(),
            unit,
            kind,
            crate::analysis::pathway_code(f)
        ));
    }
    out
}
