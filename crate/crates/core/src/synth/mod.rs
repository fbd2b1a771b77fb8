//! Synthetic labeled patients drawn uniformly inside the ranges each tree
//! path allows.

mod csvio;

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{Diagnosis, FeatureId, FeatureKind, FeatureValue, FeatureValues, PatientRecord};
use crate::dtree::{DecisionTree, FeatureConstraint, Interval, PathBox};

pub use csvio::{read_csv, read_dataset_dir, write_csv, write_dataset_dir, CsvError, DATASET_FILE, PROVENANCE_FILE};

/// Generator identifier recorded in provenance.
pub const GENERATOR_ID: &str = "chacha8-stream-v1";

/// Values are drawn on this grid (four decimals).
pub const GRID_SCALE: f64 = 1e4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("no value of {feature} fits the path to {diagnosis} within the physiological limits")]
    EmptyInterval { diagnosis: Diagnosis, feature: FeatureId },
    #[error("path to {0} requires gender to be unavailable")]
    GenderUnavailable(Diagnosis),
    #[error("class {0} has positive weight but no feasible path")]
    UnreachableClass(Diagnosis),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("patient {patient_id}: drawn for {expected} but the tree says {got}")]
    OracleMismatch { patient_id: String, expected: Diagnosis, got: Diagnosis },
    #[error("take_first({k}) on a dataset of {n} patients")]
    OutOfRange { k: usize, n: usize },
}

/// Physiological min/max per numeric feature.
pub fn default_broad_limits() -> BTreeMap<FeatureId, (f64, f64)> {
    use FeatureId::*;
    BTreeMap::from([
        (Hemoglobin, (3.0, 20.0)),
        (Mcv, (50.0, 130.0)),
        (Ferritin, (1.0, 500.0)),
        (ReticulocyteCount, (0.1, 8.0)),
        (SegmentedNeutrophils, (0.0, 15.0)),
        (Tibc, (100.0, 600.0)),
        (Hematocrit, (15.0, 55.0)),
        (Tsat, (2.0, 60.0)),
        (Rbc, (2.0, 6.5)),
        (SerumIron, (10.0, 250.0)),
        (Folate, (0.5, 25.0)),
        (Creatinine, (0.4, 2.5)),
        (Cholesterol, (100.0, 350.0)),
        (Copper, (50.0, 200.0)),
        (Ethanol, (0.0, 100.0)),
        (Glucose, (60.0, 250.0)),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_patients: usize,
    /// Relative class weights; missing classes weigh 0.
    pub class_weights: BTreeMap<Diagnosis, f64>,
    pub seed: u64,
    pub broad_limits: BTreeMap<FeatureId, (f64, f64)>,
    /// Chance that a feature the path does not test is recorded unavailable.
    pub background_missing: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_patients: 70_000,
            class_weights: Diagnosis::ALL.into_iter().map(|d| (d, 1.0)).collect(),
            seed: 1,
            broad_limits: default_broad_limits(),
            background_missing: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.class_weights.values().any(|w| !w.is_finite() || *w < 0.0) {
            return bad("class weights must be finite and non-negative".into());
        }
        if self.class_weights.values().sum::<f64>() <= 0.0 {
            return bad("class weights must sum to a positive value".into());
        }
        if !(0.0..=1.0).contains(&self.background_missing) {
            return bad("background_missing must lie in [0, 1]".into());
        }
        for f in FeatureId::ALL.into_iter().filter(|f| f.kind() == FeatureKind::Numeric) {
            match self.broad_limits.get(&f) {
                None => return bad(format!("no broad limit for {f}")),
                Some(&(lo, hi)) if !(lo.is_finite() && hi.is_finite() && lo < hi) => {
                    return bad(format!("broad limit for {f} needs finite low < high"))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// How one feature is drawn on one path.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureSpec {
    /// Uniform over grid points `klo..=khi` (value = k / 10^4).
    Grid {
        klo: i64,
        khi: i64,
        p_unavailable: f64,
    },
    Choice {
        options: Vec<String>,
        p_unavailable: f64,
    },
    Unavailable,
}

impl FeatureSpec {
    /// Numeric range covered, if numeric.
    pub fn range(&self) -> Option<(f64, f64)> {
        match self {
            FeatureSpec::Grid { klo, khi, .. } => Some((*klo as f64 / GRID_SCALE, *khi as f64 / GRID_SCALE)),
            _ => None,
        }
    }
}

/// Samplers for one root-to-leaf path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSampler {
    pub path_index: usize,
    pub specs: Vec<FeatureSpec>,
}

impl PathSampler {
    pub fn spec(&self, f: FeatureId) -> &FeatureSpec {
        &self.specs[f.index()]
    }
}

/// Per-class, per-path sampling specs derived from a tree.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeBook {
    by_class: BTreeMap<Diagnosis, Vec<PathSampler>>,
}

impl RangeBook {
    pub fn samplers(&self, d: Diagnosis) -> &[PathSampler] {
        self.by_class.get(&d).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Hull of the numeric ranges of `feature` over all paths to `d`.
    pub fn interval(&self, d: Diagnosis, feature: FeatureId) -> Option<(f64, f64)> {
        self.samplers(d).iter().filter_map(|s| s.spec(feature).range()).reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)))
    }

    /// Probability, averaged over paths of `d`, that `feature` is unavailable.
    pub fn unavailable_probability(&self, d: Diagnosis, feature: FeatureId) -> f64 {
        let s = self.samplers(d);
        if s.is_empty() {
            return 0.0;
        }
        let total: f64 = s
            .iter()
            .map(|p| match p.spec(feature) {
                FeatureSpec::Unavailable => 1.0,
                FeatureSpec::Grid { p_unavailable, .. } | FeatureSpec::Choice { p_unavailable, .. } => *p_unavailable,
            })
            .sum();
        total / s.len() as f64
    }
}

fn grid_bounds(i: &Interval) -> Option<(i64, i64)> {
    let inside = |k: i64| i.contains(k as f64 / GRID_SCALE);
    let mut klo = (i.lo * GRID_SCALE).round() as i64;
    while !inside(klo) && (klo as f64 / GRID_SCALE) <= i.lo {
        klo += 1;
    }
    let mut khi = (i.hi * GRID_SCALE).round() as i64;
    while !inside(khi) && (khi as f64 / GRID_SCALE) >= i.hi {
        khi -= 1;
    }
    (klo <= khi && inside(klo) && inside(khi)).then_some((klo, khi))
}

/// For each leaf path, intersect the broad limits with the path's
/// conditions. Features a path does not test use the broad limits.
pub fn derive_range_book(
    tree: &DecisionTree,
    broad_limits: &BTreeMap<FeatureId, (f64, f64)>,
    background_missing: f64,
) -> Result<RangeBook, SynthError> {
    let mut by_class: BTreeMap<Diagnosis, Vec<PathSampler>> = BTreeMap::new();
    for (path_index, path) in tree.paths().iter().enumerate() {
        let bx = PathBox::of(tree, path);
        if !bx.is_feasible() {
            continue;
        }
        let d = path.diagnosis;
        let mut specs = Vec::with_capacity(FeatureId::COUNT);
        for f in FeatureId::ALL {
            let spec = match (f.kind(), bx.get(f)) {
                (FeatureKind::Categorical, FeatureConstraint::Unavailable) => return Err(SynthError::GenderUnavailable(d)),
                (_, FeatureConstraint::Unavailable) => FeatureSpec::Unavailable,
                (FeatureKind::Categorical, FeatureConstraint::Categories(cs)) => {
                    FeatureSpec::Choice { options: cs.clone(), p_unavailable: 0.0 }
                }
                (FeatureKind::Categorical, _) => {
                    FeatureSpec::Choice { options: f.categories().iter().map(|c| c.to_string()).collect(), p_unavailable: 0.0 }
                }
                (FeatureKind::Numeric, c) => {
                    let &(lo, hi) =
                        broad_limits.get(&f).ok_or_else(|| SynthError::InvalidConfig(format!("no broad limit for {f}")))?;
                    let broad = Interval::closed(lo, hi);
                    let (range, p_unavailable) = match c {
                        FeatureConstraint::Numeric(i) => (broad.intersect(i), 0.0),
                        _ => (broad, background_missing),
                    };
                    let (klo, khi) = grid_bounds(&range).ok_or(SynthError::EmptyInterval { diagnosis: d, feature: f })?;
                    FeatureSpec::Grid { klo, khi, p_unavailable }
                }
            };
            specs.push(spec);
        }
        let sampler = PathSampler { path_index, specs };
        check_corners(tree, d, &sampler)?;
        by_class.entry(d).or_default().push(sampler);
    }
    Ok(RangeBook { by_class })
}

/// Walk the low, high and middle corners of a sampler's box through the
/// tree; each must land on the sampler's diagnosis.
fn check_corners(tree: &DecisionTree, d: Diagnosis, s: &PathSampler) -> Result<(), SynthError> {
    for corner in 0..3 {
        let mut v = FeatureValues::unavailable();
        for f in FeatureId::ALL {
            let value = match s.spec(f) {
                FeatureSpec::Grid { klo, khi, .. } => {
                    let k = match corner {
                        0 => *klo,
                        1 => *khi,
                        _ => klo + (khi - klo) / 2,
                    };
                    FeatureValue::Numeric(k as f64 / GRID_SCALE)
                }
                FeatureSpec::Choice { options, .. } => FeatureValue::Categorical(options[corner % options.len()].clone()),
                FeatureSpec::Unavailable => FeatureValue::Unavailable,
            };
            v.set(f, value);
        }
        let got = tree.evaluate_values(&v).0;
        if got != d {
            return Err(SynthError::OracleMismatch { patient_id: format!("range-check/{d}"), expected: d, got });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_digest: String,
    pub seed: u64,
    pub generator: String,
    pub tree_digest: String,
    pub n_patients: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub patients: Vec<PatientRecord>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    /// Patients per class in [`Diagnosis`] order.
    pub fn class_histogram(&self) -> BTreeMap<Diagnosis, usize> {
        let mut h: BTreeMap<Diagnosis, usize> = Diagnosis::ALL.into_iter().map(|d| (d, 0)).collect();
        for p in &self.patients {
            *h.get_mut(&p.gold_label).unwrap() += 1;
        }
        h
    }
}

fn unit_f64(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn below(rng: &mut ChaCha8Rng, n: u64) -> u64 {
    debug_assert!(n > 0);
    let zone = (u64::MAX / n) * n;
    loop {
        let x = rng.next_u64();
        if x < zone {
            return x % n;
        }
    }
}

/// Deterministic per-patient random stream.
pub fn patient_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn patient_id(index: usize) -> String {
    format!("P{:06}", index + 1)
}

fn draw_patient(
    book: &RangeBook,
    classes: &[(Diagnosis, f64)],
    total: f64,
    seed: u64,
    index: usize,
) -> (Diagnosis, FeatureValues) {
    let mut rng = patient_rng(seed, index as u64);
    let u = unit_f64(&mut rng) * total;
    let mut acc = 0.0;
    let mut class = classes.last().unwrap().0;
    for &(d, w) in classes {
        acc += w;
        if u < acc {
            class = d;
            break;
        }
    }
    let samplers = book.samplers(class);
    let sampler = &samplers[below(&mut rng, samplers.len() as u64) as usize];
    let mut values = FeatureValues::unavailable();
    for f in FeatureId::ALL {
        let value = match sampler.spec(f) {
            FeatureSpec::Unavailable => FeatureValue::Unavailable,
            FeatureSpec::Grid { klo, khi, p_unavailable } => {
                if missing(&mut rng, *p_unavailable) {
                    FeatureValue::Unavailable
                } else {
                    let k = klo + below(&mut rng, (khi - klo + 1) as u64) as i64;
                    FeatureValue::Numeric(k as f64 / GRID_SCALE)
                }
            }
            FeatureSpec::Choice { options, p_unavailable } => {
                if missing(&mut rng, *p_unavailable) {
                    FeatureValue::Unavailable
                } else {
                    FeatureValue::Categorical(options[below(&mut rng, options.len() as u64) as usize].clone())
                }
            }
        };
        values.set(f, value);
    }
    (class, values)
}

fn missing(rng: &mut ChaCha8Rng, p: f64) -> bool {
    if p >= 1.0 {
        true
    } else if p <= 0.0 {
        false
    } else {
        unit_f64(rng) < p
    }
}

/// Draw `config.n_patients` patients: class by weight, path uniformly
/// within the class, then each feature uniformly on its range. Every record
/// is checked against the tree.
pub fn generate(tree: &DecisionTree, config: &SynthConfig) -> Result<Dataset, SynthError> {
    config.validate()?;
    let book = derive_range_book(tree, &config.broad_limits, config.background_missing)?;
    let classes: Vec<(Diagnosis, f64)> = Diagnosis::ALL
        .into_iter()
        .map(|d| (d, config.class_weights.get(&d).copied().unwrap_or(0.0)))
        .filter(|&(_, w)| w > 0.0)
        .collect();
    for &(d, _) in &classes {
        if book.samplers(d).is_empty() {
            return Err(SynthError::UnreachableClass(d));
        }
    }
    let total: f64 = classes.iter().map(|c| c.1).sum();
    let patients: Result<Vec<PatientRecord>, SynthError> = (0..config.n_patients)
        .into_par_iter()
        .map(|i| {
            let (class, values) = draw_patient(&book, &classes, total, config.seed, i);
            let id = patient_id(i);
            let got = tree.evaluate_values(&values).0;
            if got != class {
                return Err(SynthError::OracleMismatch { patient_id: id, expected: class, got });
            }
            PatientRecord::new(id, values, class).map_err(|e| SynthError::InvalidConfig(e.to_string()))
        })
        .collect();
    Ok(Dataset {
        patients: patients?,
        provenance: Provenance {
            config_digest: config.digest(),
            seed: config.seed,
            generator: GENERATOR_ID.to_string(),
            tree_digest: tree.digest().to_string(),
            n_patients: config.n_patients,
        },
    })
}

/// Order-preserving prefix of `k` patients, `1 <= k <= len`.
pub fn take_first(dataset: &Dataset, k: usize) -> Result<Dataset, SynthError> {
    let n = dataset.len();
    if k == 0 || k > n {
        return Err(SynthError::OutOfRange { k, n });
    }
    Ok(Dataset { patients: dataset.patients[..k].to_vec(), provenance: dataset.provenance.clone() })
}

#[cfg(test)]
mod tests;
