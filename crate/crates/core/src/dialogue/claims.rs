use std::sync::OnceLock;

use regex::Regex;

use crate::domain::{format_number, parse_feature_name, FeatureId};
use crate::dtree::{CmpOp, Condition};

/// A stated numeric comparison, e.g. `hemoglobin 10 is less than 12.`
#[derive(Debug, Clone, PartialEq)]
pub struct Claim {
    pub feature: FeatureId,
    pub value: f64,
    pub op: CmpOp,
    pub threshold: f64,
}

impl Claim {
    pub fn line(&self) -> String {
        format!(
            "{} {} is {} {}.",
            self.feature.display_name(),
            format_number(self.value),
            self.op.words(),
            format_number(self.threshold)
        )
    }

    /// Whether the comparison holds for the patient's actual value.
    pub fn holds_for(&self, actual: f64) -> bool {
        self.op.holds(actual, self.threshold)
    }
}

/// Claims justifying that `value` satisfies `cond`. Both bounds of a range
/// are stated; non-numeric conditions give no claims.
pub fn claims_for(feature: FeatureId, value: f64, cond: &Condition) -> Vec<Claim> {
    let c = |op, threshold| Claim { feature, value, op, threshold };
    match *cond {
        Condition::Compare { op, value: t } => vec![c(op, t)],
        Condition::Between { low, high, low_closed, high_closed } => {
            vec![c(if low_closed { CmpOp::Ge } else { CmpOp::Gt }, low), c(if high_closed { CmpOp::Le } else { CmpOp::Lt }, high)]
        }
        _ => Vec::new(),
    }
}

fn claim_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?im)^[\s*>\-]*([a-z][a-z0-9 ()/]*?)\s+(-?\d+(?:\.\d+)?)\s*[^\s\d]*\s+is\s+(less than or equal to|greater than or equal to|less than|greater than|equal to)\s+(-?\d+(?:\.\d+)?)",
        )
        .unwrap()
    })
}

/// Every parseable claim line in `text`.
pub fn parse_claims(text: &str) -> Vec<Claim> {
    claim_re()
        .captures_iter(text)
        .filter_map(|cap| {
            let feature = parse_feature_name(cap[1].trim()).ok()?;
            let op = match &cap[3].to_lowercase()[..] {
                "less than" => CmpOp::Lt,
                "less than or equal to" => CmpOp::Le,
                "greater than" => CmpOp::Gt,
                "greater than or equal to" => CmpOp::Ge,
                _ => CmpOp::Eq,
            };
            Some(Claim { feature, value: cap[2].parse().ok()?, op, threshold: cap[4].parse().ok()? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn claims_round_trip_through_text() {
        let cond = Condition::in_closed_interval(80.0, 100.0);
        let cs = claims_for(FeatureId::Mcv, 83.0, &cond);
        let text = cs.iter().map(Claim::line).collect::<Vec<_>>().join("\n");
        assert_eq!(
            text,
            "mean corpuscular volume 83 is greater than or equal to 80.\nmean corpuscular volume 83 is less than or equal to 100."
        );
        assert_eq!(parse_claims(&text), cs);
        assert!(cs.iter().all(|c| c.holds_for(83.0)));
    }

    #[test]
    fn tolerant_parsing() {
        let text = "Step 1:\n- Hemoglobin 10 g/dL is less than 12.\nso anemia.\n* MCV 83.5 is greater than 100";
        let cs = parse_claims(text);
        assert_eq!(cs.len(), 2);
        assert_eq!(cs[0].feature, FeatureId::Hemoglobin);
        assert_eq!(cs[1], Claim { feature: FeatureId::Mcv, value: 83.5, op: CmpOp::Gt, threshold: 100.0 });
        assert!(!cs[1].holds_for(83.5));
    }
}
