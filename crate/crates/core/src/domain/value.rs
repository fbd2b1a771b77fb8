use std::fmt;

use serde::{Deserialize, Serialize};

use super::{FeatureId, FeatureKind};

/// A feature value as stored in a patient record or handed to a policy.
///
/// Numeric values are always expressed in the feature's canonical unit
/// (see [`FeatureId::unit`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureValue {
    Numeric(f64),
    Categorical(String),
    Unavailable,
}

impl FeatureValue {
    pub fn is_unavailable(&self) -> bool {
        matches!(self, FeatureValue::Unavailable)
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            FeatureValue::Numeric(v) => Some(*v),
            _ => None,
        }
    }

    /// Check that the variant fits the feature kind and numbers are finite.
    pub fn check_for(&self, feature: FeatureId) -> Result<(), String> {
        match (self, feature.kind()) {
            (FeatureValue::Unavailable, _) => Ok(()),
            (FeatureValue::Numeric(v), FeatureKind::Numeric) if v.is_finite() => Ok(()),
            (FeatureValue::Numeric(v), FeatureKind::Numeric) => Err(format!("{feature}: non-finite value {v}")),
            (FeatureValue::Categorical(c), FeatureKind::Categorical) if feature.categories().contains(&c.as_str()) => Ok(()),
            (FeatureValue::Categorical(c), _) => Err(format!("{feature}: invalid category `{c}`")),
            (FeatureValue::Numeric(_), FeatureKind::Categorical) => Err(format!("{feature}: expected a category")),
        }
    }

    /// Value without unit: `10.4`, `male` or `unavailable`.
    pub fn value_text(&self) -> String {
        match self {
            FeatureValue::Numeric(v) => format_number(*v),
            FeatureValue::Categorical(c) => c.clone(),
            FeatureValue::Unavailable => "unavailable".to_string(),
        }
    }

    /// `<display name>: <value> <unit>` as shown to a diagnostician.
    pub fn render(&self, feature: FeatureId) -> String {
        match self {
            FeatureValue::Numeric(v) if !feature.unit().is_empty() => {
                format!("{}: {} {}", feature.display_name(), format_number(*v), feature.unit())
            }
            _ => format!("{}: {}", feature.display_name(), self.value_text()),
        }
    }
}

impl fmt::Display for FeatureValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.value_text())
    }
}

/// Up to four decimals, trailing zeros dropped: `10`, `1.6`, `11.2345`.
pub fn format_number(v: f64) -> String {
    let mut s = format!("{v:.4}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".to_string();
    }
    s
}
