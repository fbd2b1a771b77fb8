use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Diagnosis, FeatureId, FeatureValue};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatientError {
    #[error("feature `{0}` is missing")]
    MissingFeature(FeatureId),
    #[error("gender must be recorded")]
    GenderUnavailable,
    #[error("invalid value: {0}")]
    InvalidValue(String),
}

/// All 17 feature values of one patient, indexed by [`FeatureId`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<FeatureId, FeatureValue>", into = "BTreeMap<FeatureId, FeatureValue>")]
pub struct FeatureValues {
    values: [FeatureValue; FeatureId::COUNT],
}

impl FeatureValues {
    /// Every feature unavailable; gender must be set before the record is valid.
    pub fn unavailable() -> Self {
        FeatureValues { values: std::array::from_fn(|_| FeatureValue::Unavailable) }
    }

    pub fn get(&self, feature: FeatureId) -> &FeatureValue {
        &self.values[feature.index()]
    }

    pub fn set(&mut self, feature: FeatureId, value: FeatureValue) {
        self.values[feature.index()] = value;
    }

    pub fn with(mut self, feature: FeatureId, value: FeatureValue) -> Self {
        self.set(feature, value);
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (FeatureId, &FeatureValue)> {
        FeatureId::ALL.into_iter().map(move |f| (f, &self.values[f.index()]))
    }

    pub fn validate(&self) -> Result<(), PatientError> {
        for (f, v) in self.iter() {
            v.check_for(f).map_err(PatientError::InvalidValue)?;
        }
        if self.get(FeatureId::Gender).is_unavailable() {
            return Err(PatientError::GenderUnavailable);
        }
        Ok(())
    }
}

impl TryFrom<BTreeMap<FeatureId, FeatureValue>> for FeatureValues {
    type Error = PatientError;

    fn try_from(mut map: BTreeMap<FeatureId, FeatureValue>) -> Result<Self, Self::Error> {
        let mut out = FeatureValues::unavailable();
        for f in FeatureId::ALL {
            let v = map.remove(&f).ok_or(PatientError::MissingFeature(f))?;
            out.set(f, v);
        }
        Ok(out)
    }
}

impl From<FeatureValues> for BTreeMap<FeatureId, FeatureValue> {
    fn from(v: FeatureValues) -> Self {
        FeatureId::ALL.into_iter().zip(v.values).collect()
    }
}

/// One labeled patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub values: FeatureValues,
    pub gold_label: Diagnosis,
}

impl PatientRecord {
    pub fn new(patient_id: impl Into<String>, values: FeatureValues, gold_label: Diagnosis) -> Result<Self, PatientError> {
        values.validate()?;
        Ok(PatientRecord { patient_id: patient_id.into(), values, gold_label })
    }

    pub fn value(&self, feature: FeatureId) -> &FeatureValue {
        self.values.get(feature)
    }
}
