use std::sync::OnceLock;

use regex::Regex;

use super::prompt::Mode;
use crate::dialogue::{FeatureRequest, PolicyAction};
use crate::domain::{AliasTable, ParseNameError};

fn marker_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(REQUEST|DIAGNOSIS)\b[*_`\s]*[:：][*_`\s]*([^\n]*)").unwrap())
}

fn clean_payload(s: &str) -> &str {
    s.trim().trim_matches(|c: char| matches!(c, '*' | '_' | '`' | '"' | '\'' | '.' | ' '))
}

/// Parsed reply: the action and the text before the deciding marker.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReply {
    pub action: PolicyAction,
    pub reasoning: Option<String>,
}

pub fn parse_reply(raw: &str, mode: Mode) -> ParsedReply {
    parse_reply_with(AliasTable::builtin(), raw, mode)
}

pub fn parse_reply_with(aliases: &AliasTable, raw: &str, mode: Mode) -> ParsedReply {
    let last =
        marker_re().captures_iter(raw).filter(|c| mode == Mode::Sequential || c[1].eq_ignore_ascii_case("diagnosis")).last();
    if let Some(cap) = last {
        let start = cap.get(0).unwrap().start();
        let reasoning = raw[..start].trim();
        let reasoning = (!reasoning.is_empty()).then(|| reasoning.to_string());
        let payload = clean_payload(&cap[2]);
        let action = if cap[1].eq_ignore_ascii_case("request") {
            match aliases.parse_feature(payload) {
                Ok(f) => PolicyAction::RequestFeature(FeatureRequest::Known(f)),
                Err(ParseNameError::NoMatch(..)) if !payload.is_empty() => {
                    PolicyAction::RequestFeature(FeatureRequest::Unknown(payload.to_string()))
                }
                Err(_) => PolicyAction::Malformed,
            }
        } else {
            match aliases.parse_diagnosis(payload) {
                Ok(d) => PolicyAction::FinalDiagnosis(d),
                Err(_) => PolicyAction::Malformed,
            }
        };
        return ParsedReply { action, reasoning };
    }
    let mentions = aliases.diagnoses.mentions(raw);
    let picked = match mode {
        Mode::Sequential => {
            let first = mentions.first().map(|m| m.id);
            first.filter(|d| mentions.iter().all(|m| m.id == *d))
        }
        Mode::Plain => mentions.last().map(|m| m.id),
    };
    let text = raw.trim();
    ParsedReply {
        action: picked.map_or(PolicyAction::Malformed, PolicyAction::FinalDiagnosis),
        reasoning: (!text.is_empty()).then(|| text.to_string()),
    }
}

/// Non-blank text after the line holding the last `DIAGNOSIS:` marker.
pub fn trailing_chatter(raw: &str) -> Option<&str> {
    let cap = marker_re().captures_iter(raw).filter(|c| c[1].eq_ignore_ascii_case("diagnosis")).last()?;
    let rest = raw[cap.get(0).unwrap().end()..].trim();
    (!rest.is_empty()).then_some(rest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Diagnosis, FeatureId};

    #[test]
    fn contract_lines() {
        let r = parse_reply("The MCV is normal.\nREQUEST: reticulocyte count", Mode::Sequential);
        assert_eq!(r.action, PolicyAction::RequestFeature(FeatureRequest::Known(FeatureId::ReticulocyteCount)));
        assert_eq!(r.reasoning.as_deref(), Some("The MCV is normal."));
        let r = parse_reply("…therefore DIAGNOSIS: Aplastic anemia\nLet me know if you need more.", Mode::Sequential);
        assert_eq!(r.action, PolicyAction::FinalDiagnosis(Diagnosis::AplasticAnemia));
        assert_eq!(
            trailing_chatter("DIAGNOSIS: Aplastic anemia\nLet me know if you need more."),
            Some("Let me know if you need more.")
        );
        assert_eq!(trailing_chatter("x\nDIAGNOSIS: Aplastic anemia\n"), None);
        assert_eq!(parse_reply("I need more information.", Mode::Sequential).action, PolicyAction::Malformed);
    }

    #[test]
    fn markdown_and_last_marker() {
        let r = parse_reply("**REQUEST:** hemoglobin\nActually:\n**DIAGNOSIS**: *No anemia*.", Mode::Sequential);
        assert_eq!(r.action, PolicyAction::FinalDiagnosis(Diagnosis::NoAnemia));
        let r = parse_reply("request: blood pressure", Mode::Sequential);
        assert_eq!(r.action, PolicyAction::RequestFeature(FeatureRequest::Unknown("blood pressure".into())));
        assert_eq!(parse_reply("DIAGNOSIS: something odd", Mode::Sequential).action, PolicyAction::Malformed);
    }

    #[test]
    fn fuzzy_fallback() {
        let r = parse_reply("This looks like hemolytic anemia to me.", Mode::Sequential);
        assert_eq!(r.action, PolicyAction::FinalDiagnosis(Diagnosis::HemolyticAnemia));
        let two = "Either aplastic anemia or hemolytic anemia.";
        assert_eq!(parse_reply(two, Mode::Sequential).action, PolicyAction::Malformed);
        assert_eq!(parse_reply(two, Mode::Plain).action, PolicyAction::FinalDiagnosis(Diagnosis::HemolyticAnemia));
        // Plain mode ignores request lines.
        assert_eq!(parse_reply("REQUEST: ferritin", Mode::Plain).action, PolicyAction::Malformed);
    }

    #[test]
    fn every_contract_line_round_trips() {
        for f in FeatureId::ALL {
            let r = parse_reply(&format!("REQUEST: {}", f.display_name()), Mode::Sequential);
            assert_eq!(r.action, PolicyAction::RequestFeature(FeatureRequest::Known(f)));
            let r = parse_reply(&format!("REQUEST: {}", f.canonical_name()), Mode::Sequential);
            assert_eq!(r.action, PolicyAction::RequestFeature(FeatureRequest::Known(f)));
        }
        for d in Diagnosis::ALL {
            for mode in [Mode::Plain, Mode::Sequential] {
                let r = parse_reply(&format!("some text\nDIAGNOSIS: {}", d.display_name()), mode);
                assert_eq!(r.action, PolicyAction::FinalDiagnosis(d));
            }
        }
    }
}
