use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Diagnosis, FeatureId, Pathway, Transcript};

pub fn pathway_code(f: FeatureId) -> char {
    match f {
        FeatureId::Hemoglobin => 'H',
        FeatureId::Gender => 'G',
        FeatureId::Mcv => 'M',
        FeatureId::Ferritin => 'F',
        FeatureId::ReticulocyteCount => 'R',
        FeatureId::SegmentedNeutrophils => 'S',
        FeatureId::Tibc => 'T',
        FeatureId::Hematocrit => 'C',
        FeatureId::Tsat => 'A',
        FeatureId::Rbc => 'B',
        FeatureId::SerumIron => 'I',
        FeatureId::Folate => 'O',
        FeatureId::Creatinine => 'K',
        FeatureId::Cholesterol => 'L',
        FeatureId::Copper => 'U',
        FeatureId::Ethanol => 'E',
        FeatureId::Glucose => 'Q',
    }
}

pub fn feature_of_code(c: char) -> Option<FeatureId> {
    FeatureId::ALL.into_iter().find(|f| pathway_code(*f) == c)
}

/// A request sequence, one character per feature.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PathwayString(String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("`{0}` is not a pathway code")]
pub struct BadPathwayCode(pub char);

impl PathwayString {
    pub fn from_features(features: &[FeatureId]) -> Self {
        PathwayString(features.iter().map(|f| pathway_code(*f)).collect())
    }

    pub fn of(pathway: &Pathway) -> Self {
        Self::from_features(&pathway.requests)
    }

    pub fn parse(s: &str) -> Result<Self, BadPathwayCode> {
        match s.chars().find(|c| feature_of_code(*c).is_none()) {
            Some(c) => Err(BadPathwayCode(c)),
            None => Ok(PathwayString(s.to_string())),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.chars().count()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn features(&self) -> Vec<FeatureId> {
        self.0.chars().filter_map(feature_of_code).collect()
    }
}

impl fmt::Display for PathwayString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for PathwayString {
    type Error = BadPathwayCode;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        PathwayString::parse(&s)
    }
}

impl From<PathwayString> for String {
    fn from(p: PathwayString) -> String {
        p.0
    }
}

/// Edit distance with unit-cost insertion, deletion and substitution.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub type PathwayMap = BTreeMap<Diagnosis, PathwayString>;

/// Row-major; `None` where two maps share no class.
pub type DistanceMatrix = Vec<Vec<Option<f64>>>;

/// Modal pathway per predicted diagnosis; ties go to the smaller string.
/// Failed episodes are skipped.
pub fn commonest_pathways(transcripts: &[Transcript]) -> PathwayMap {
    let mut tally: BTreeMap<Diagnosis, HashMap<PathwayString, usize>> = BTreeMap::new();
    for t in transcripts {
        if let Some(d) = t.outcome.diagnosis() {
            *tally.entry(d).or_default().entry(PathwayString::of(&t.outcome)).or_default() += 1;
        }
    }
    tally
        .into_iter()
        .map(|(d, counts)| {
            let best = counts
                .into_iter()
                .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)))
                .map(|(p, _)| p)
                .expect("non-empty tally");
            (d, best)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("the pathway maps share no diagnosis")]
pub struct NoSharedClasses;

/// Mean edit distance over the diagnoses present in both maps.
pub fn cross_model_distance(a: &PathwayMap, b: &PathwayMap) -> Result<f64, NoSharedClasses> {
    let pairs: Vec<usize> = a.iter().filter_map(|(d, p)| b.get(d).map(|q| levenshtein(p.as_str(), q.as_str()))).collect();
    if pairs.is_empty() {
        return Err(NoSharedClasses);
    }
    Ok(pairs.iter().sum::<usize>() as f64 / pairs.len() as f64)
}

/// Symmetric distance matrix; `None` where two maps share no class.
pub fn distance_matrix(maps: &[(String, PathwayMap)]) -> DistanceMatrix {
    maps.iter().map(|(_, a)| maps.iter().map(|(_, b)| cross_model_distance(a, b).ok()).collect()).collect()
}
