use super::*;
use crate::dtree::{load_tree, DEFAULT_TREE_TOML};

fn tree() -> DecisionTree {
    load_tree(DEFAULT_TREE_TOML).unwrap()
}

fn small(n: usize, seed: u64) -> SynthConfig {
    SynthConfig { n_patients: n, seed, ..SynthConfig::default() }
}

#[test]
fn range_book_rows_follow_path_constraints() {
    let book = derive_range_book(&tree(), &default_broad_limits(), 0.0).unwrap();
    let d = Diagnosis::AplasticAnemia;
    let (lo, hi) = book.interval(d, FeatureId::Hemoglobin).unwrap();
    assert_eq!(lo, 3.0);
    // `< 13` on the four-decimal grid.
    assert_eq!(hi, 12.9999);
    assert_eq!(book.interval(d, FeatureId::Mcv), Some((80.0, 100.0)));
    assert_eq!(book.interval(d, FeatureId::ReticulocyteCount), Some((0.1, 2.0)));
    assert_eq!(book.interval(d, FeatureId::Glucose), Some((60.0, 250.0)));

    let no = Diagnosis::NoAnemia;
    assert_eq!(book.interval(no, FeatureId::Hemoglobin), Some((12.0, 20.0)));
    let female_path = book
        .samplers(no)
        .iter()
        .find(|s| matches!(s.spec(FeatureId::Gender), FeatureSpec::Choice { options, .. } if options == &["female"]))
        .unwrap();
    assert_eq!(female_path.spec(FeatureId::Hemoglobin).range(), Some((12.0, 12.9999)));

    // Two of the six unspecified-anemia paths need mcv unavailable.
    assert!((book.unavailable_probability(Diagnosis::UnspecifiedAnemia, FeatureId::Mcv) - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn contradictory_limits_are_rejected() {
    let mut limits = default_broad_limits();
    limits.insert(FeatureId::Mcv, (50.0, 100.0));
    let err = derive_range_book(&tree(), &limits, 0.0).unwrap_err();
    assert!(matches!(err, SynthError::EmptyInterval { feature: FeatureId::Mcv, .. }), "{err}");
}

#[test]
fn generation_is_sound_and_deterministic() {
    let t = tree();
    let a = generate(&t, &small(500, 3)).unwrap();
    let b = generate(&t, &small(500, 3)).unwrap();
    let c = generate(&t, &small(500, 4)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.patients, c.patients);
    for p in &a.patients {
        assert_eq!(t.evaluate(p).0, p.gold_label);
    }
    assert_eq!(a.patients[0].patient_id, "P000001");
    assert_eq!(a.provenance.generator, GENERATOR_ID);
    assert!(generate(&t, &small(0, 1)).unwrap().is_empty());
}

#[test]
fn prefix_of_larger_run_matches_smaller_run() {
    let t = tree();
    let big = generate(&t, &small(300, 9)).unwrap();
    let little = generate(&t, &small(100, 9)).unwrap();
    assert_eq!(&big.patients[..100], &little.patients[..]);
}

#[test]
fn single_class_weights() {
    let mut cfg = small(200, 1);
    cfg.class_weights = BTreeMap::from([(Diagnosis::NoAnemia, 1.0)]);
    let ds = generate(&tree(), &cfg).unwrap();
    assert!(ds.patients.iter().all(|p| p.gold_label == Diagnosis::NoAnemia));
}

#[test]
fn background_missingness_keeps_labels() {
    let mut cfg = small(400, 2);
    cfg.background_missing = 0.3;
    let t = tree();
    let ds = generate(&t, &cfg).unwrap();
    assert!(ds.patients.iter().any(|p| p.value(FeatureId::Glucose).is_unavailable()));
    assert!(ds.patients.iter().all(|p| !p.value(FeatureId::Gender).is_unavailable()));
}

#[test]
fn take_first_bounds() {
    let ds = generate(&tree(), &small(50, 1)).unwrap();
    assert_eq!(take_first(&ds, 50).unwrap(), ds);
    assert_eq!(take_first(&ds, 10).unwrap().patients, ds.patients[..10].to_vec());
    assert_eq!(take_first(&ds, 0), Err(SynthError::OutOfRange { k: 0, n: 50 }));
    assert_eq!(take_first(&ds, 51), Err(SynthError::OutOfRange { k: 51, n: 50 }));
}

#[test]
fn csv_round_trip() {
    let ds = generate(&tree(), &small(200, 5)).unwrap();
    let mut buf = Vec::new();
    write_csv(&ds.patients, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("patient_id,gender,hemoglobin,"));
    assert!(text.lines().next().unwrap().ends_with(",glucose,label"));
    assert!(!text.contains('\r'));
    let back = read_csv(&buf[..]).unwrap();
    assert_eq!(back, ds.patients);
}

#[test]
fn invalid_configs() {
    let mut cfg = small(1, 1);
    cfg.class_weights = BTreeMap::new();
    assert!(matches!(generate(&tree(), &cfg), Err(SynthError::InvalidConfig(_))));
    let mut cfg = small(1, 1);
    cfg.broad_limits.remove(&FeatureId::Copper);
    assert!(matches!(generate(&tree(), &cfg), Err(SynthError::InvalidConfig(_))));
}
