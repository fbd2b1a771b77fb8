use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The closed set of diagnostic classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diagnosis {
    NoAnemia,
    VitaminB12FolateDeficiencyAnemia,
    UnspecifiedAnemia,
    AnemiaOfChronicDisease,
    IronDeficiencyAnemia,
    HemolyticAnemia,
    AplasticAnemia,
    InconclusiveDiagnosis,
}

impl Diagnosis {
    pub const COUNT: usize = 8;

    pub const ALL: [Diagnosis; 8] = [
        Diagnosis::NoAnemia,
        Diagnosis::VitaminB12FolateDeficiencyAnemia,
        Diagnosis::UnspecifiedAnemia,
        Diagnosis::AnemiaOfChronicDisease,
        Diagnosis::IronDeficiencyAnemia,
        Diagnosis::HemolyticAnemia,
        Diagnosis::AplasticAnemia,
        Diagnosis::InconclusiveDiagnosis,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn canonical_name(self) -> &'static str {
        match self {
            Diagnosis::NoAnemia => "no_anemia",
            Diagnosis::VitaminB12FolateDeficiencyAnemia => "vitamin_b12_folate_deficiency_anemia",
            Diagnosis::UnspecifiedAnemia => "unspecified_anemia",
            Diagnosis::AnemiaOfChronicDisease => "anemia_of_chronic_disease",
            Diagnosis::IronDeficiencyAnemia => "iron_deficiency_anemia",
            Diagnosis::HemolyticAnemia => "hemolytic_anemia",
            Diagnosis::AplasticAnemia => "aplastic_anemia",
            Diagnosis::InconclusiveDiagnosis => "inconclusive_diagnosis",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Diagnosis::NoAnemia => "No anemia",
            Diagnosis::VitaminB12FolateDeficiencyAnemia => "Vitamin B12/Folate deficiency anemia",
            Diagnosis::UnspecifiedAnemia => "Unspecified anemia",
            Diagnosis::AnemiaOfChronicDisease => "Anemia of chronic disease (ACD)",
            Diagnosis::IronDeficiencyAnemia => "Iron deficiency anemia (IDA)",
            Diagnosis::HemolyticAnemia => "Hemolytic anemia",
            Diagnosis::AplasticAnemia => "Aplastic anemia",
            Diagnosis::InconclusiveDiagnosis => "Inconclusive diagnosis",
        }
    }

    pub fn from_canonical(name: &str) -> Option<Diagnosis> {
        Diagnosis::ALL.into_iter().find(|d| d.canonical_name() == name)
    }
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for Diagnosis {
    type Err = super::ParseNameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        super::parse_diagnosis_name(s)
    }
}
