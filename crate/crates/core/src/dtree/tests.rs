use super::*;
use crate::domain::FeatureValue as V;

fn shipped() -> DecisionTree {
    load_tree(DEFAULT_TREE_TOML).unwrap()
}

fn values(pairs: &[(FeatureId, FeatureValue)]) -> FeatureValues {
    let mut v = FeatureValues::unavailable().with(FeatureId::Gender, V::Categorical("female".into()));
    for (f, x) in pairs {
        v.set(*f, x.clone());
    }
    v
}

fn num(x: f64) -> FeatureValue {
    V::Numeric(x)
}

#[test]
fn shipped_tree_has_all_eight_diagnoses() {
    let t = shipped();
    let mut ds = t.leaf_diagnoses();
    ds.sort();
    assert_eq!(ds, Diagnosis::ALL.to_vec());
    assert_eq!(t.feature_of(t.root()), Some(FeatureId::Hemoglobin));
}

#[test]
fn example_path_is_aplastic_and_reticulocyte_splits_hemolytic() {
    let t = shipped();
    let base = [(FeatureId::Hemoglobin, num(10.0)), (FeatureId::Mcv, num(83.0)), (FeatureId::ReticulocyteCount, num(1.6))];
    let (d, p) = t.evaluate_values(&values(&base));
    assert_eq!(d, Diagnosis::AplasticAnemia);
    assert_eq!(p.requests, vec![FeatureId::Hemoglobin, FeatureId::Mcv, FeatureId::ReticulocyteCount]);
    let mut high = base.clone();
    high[2].1 = num(2.5);
    assert_eq!(t.evaluate_values(&values(&high)).0, Diagnosis::HemolyticAnemia);
}

#[test]
fn gender_dependent_anemia_threshold() {
    let t = shipped();
    let male = values(&[(FeatureId::Hemoglobin, num(14.0))]).with(FeatureId::Gender, V::Categorical("male".into()));
    let (d, p) = t.evaluate_values(&male);
    assert_eq!((d, p.len()), (Diagnosis::NoAnemia, 1));

    let female = values(&[(FeatureId::Hemoglobin, num(12.5))]);
    let (d, p) = t.evaluate_values(&female);
    assert_eq!(d, Diagnosis::NoAnemia);
    assert_eq!(p.requests, vec![FeatureId::Hemoglobin, FeatureId::Gender]);

    let male = values(&[(FeatureId::Hemoglobin, num(12.5)), (FeatureId::Mcv, num(90.0))])
        .with(FeatureId::Gender, V::Categorical("male".into()));
    let (d, p) = t.evaluate_values(&male);
    assert_eq!(d, Diagnosis::InconclusiveDiagnosis);
    assert_eq!(p.requests, vec![FeatureId::Hemoglobin, FeatureId::Gender, FeatureId::Mcv, FeatureId::ReticulocyteCount]);
}

#[test]
fn unavailable_routes() {
    let t = shipped();
    let v = values(&[(FeatureId::Hemoglobin, num(9.0))]);
    assert_eq!(t.evaluate_values(&v).0, Diagnosis::UnspecifiedAnemia);
    // Hemoglobin has no explicit unavailable branch: implicit default.
    let (d, p) = t.evaluate_values(&values(&[]));
    assert_eq!((d, p.len()), (UNAVAILABLE_DEFAULT, 1));
    // A number handed to the gender node routes as unavailable.
    let odd = values(&[(FeatureId::Hemoglobin, num(12.5)), (FeatureId::Gender, num(1.0))]);
    assert_eq!(t.evaluate_values(&odd).0, UNAVAILABLE_DEFAULT);
}

#[test]
fn microcytic_iron_studies() {
    let t = shipped();
    let base = [(FeatureId::Hemoglobin, num(9.0)), (FeatureId::Mcv, num(70.0))];
    let case = |extra: &[(FeatureId, FeatureValue)]| {
        let mut all = base.to_vec();
        all.extend_from_slice(extra);
        t.evaluate_values(&values(&all)).0
    };
    assert_eq!(case(&[(FeatureId::Ferritin, num(10.0))]), Diagnosis::IronDeficiencyAnemia);
    assert_eq!(case(&[(FeatureId::Ferritin, num(150.0))]), Diagnosis::AnemiaOfChronicDisease);
    assert_eq!(
        case(&[(FeatureId::Ferritin, num(50.0)), (FeatureId::Tsat, num(10.0)), (FeatureId::Tibc, num(450.0))]),
        Diagnosis::IronDeficiencyAnemia
    );
    assert_eq!(
        case(&[
            (FeatureId::Ferritin, num(50.0)),
            (FeatureId::Tsat, num(10.0)),
            (FeatureId::Tibc, num(300.0)),
            (FeatureId::SerumIron, num(80.0))
        ]),
        Diagnosis::AnemiaOfChronicDisease
    );
    assert_eq!(case(&[(FeatureId::Ferritin, num(50.0))]), Diagnosis::InconclusiveDiagnosis);
}

#[test]
fn depth_bounds_pathways() {
    let t = shipped();
    assert_eq!(t.depth(), 7);
    for p in t.paths() {
        assert!(p.steps.len() <= t.depth());
    }
}

const GAP: &str = r#"
schema_version = 1
root = "h"
[[nodes]]
id = "h"
feature = "hemoglobin"
branches = [{ op = "<", value = 12, diagnosis = "no_anemia" }]
"#;

#[test]
fn load_errors() {
    assert!(matches!(load_tree(GAP), Err(TreeError::NonExhaustiveBranches { .. })));
    let unknown = GAP.replace("hemoglobin", "iron_panel");
    assert_eq!(load_tree(&unknown), Err(TreeError::UnknownFeature("iron_panel".into())));
    let overlap = GAP.replace(
        r#"[{ op = "<", value = 12, diagnosis = "no_anemia" }]"#,
        r#"[{ op = "<", value = 12, diagnosis = "no_anemia" }, { op = "<=", value = 20, diagnosis = "no_anemia" }, { op = ">", value = 20, diagnosis = "no_anemia" }]"#,
    );
    assert!(matches!(load_tree(&overlap), Err(TreeError::SchemaError(_))));
    let cyc = r#"
schema_version = 1
root = "a"
[[nodes]]
id = "a"
feature = "hemoglobin"
branches = [{ op = "<", value = 12, next = "b" }, { op = ">=", value = 12, diagnosis = "no_anemia" }]
[[nodes]]
id = "b"
feature = "mcv"
branches = [{ op = "<", value = 80, next = "a" }, { op = ">=", value = 80, diagnosis = "no_anemia" }]
"#;
    assert!(matches!(load_tree(cyc), Err(TreeError::CycleDetected(_))));
    let bad_unit = GAP.replace("feature = \"hemoglobin\"", "feature = \"hemoglobin\"\nunit = \"mg/dL\"");
    assert!(matches!(load_tree(&bad_unit), Err(TreeError::SchemaError(_))));
    let bad_interval = r#"
schema_version = 1
root = "a"
[[nodes]]
id = "a"
feature = "mcv"
branches = [{ op = "in_closed_interval", low = 100, high = 80, diagnosis = "no_anemia" }]
"#;
    assert!(matches!(load_tree(bad_interval), Err(TreeError::SchemaError(_))));
    let gender_gap = r#"
schema_version = 1
root = "g"
[[nodes]]
id = "g"
feature = "gender"
branches = [{ op = "equals_category", value = "male", diagnosis = "no_anemia" }]
"#;
    assert!(matches!(load_tree(gender_gap), Err(TreeError::NonExhaustiveBranches { .. })));
    assert!(matches!(load_tree("schema_version = 2\nroot = \"x\"\nnodes = []"), Err(TreeError::SchemaError(_))));
}

#[test]
fn spec_round_trip_preserves_tree_and_digest() {
    let t = shipped();
    let again = load_tree(&t.to_spec_toml()).unwrap();
    assert_eq!(again, t);
    assert_eq!(again.digest().len(), 64);
}

#[test]
fn rendered_rules_golden() {
    let text = render_rules(&shipped(), &RuleTemplate::default());
    let expected = "\
Usually, you make a diagnosis based on the following rules:
1) Look for the hemoglobin value first.
2) If the hemoglobin value is greater than or equal to 13 g/dL, the diagnosis is No anemia.
3) If the hemoglobin value is less than 12 g/dL, look for the mean corpuscular volume value. Here you can distinguish the following cases:
   a) If the mean corpuscular volume results are unavailable, the diagnosis is Unspecified anemia.
   b) If the mean corpuscular volume value is less than 80 fL, look for the ferritin value. If the ferritin results are unavailable, the diagnosis is Inconclusive diagnosis. If the ferritin value is less than 30 ng/mL, the diagnosis is Iron deficiency anemia (IDA). If the ferritin value is greater than 100 ng/mL, the diagnosis is Anemia of chronic disease (ACD). If the ferritin value is greater than or equal to 30 ng/mL but less than or equal to 100 ng/mL, look for the transferrin saturation value. If the transferrin saturation value is less than 20 %, look for the total iron binding capacity value. If the total iron binding capacity value is greater than 400 µg/dL, the diagnosis is Iron deficiency anemia (IDA). If the total iron binding capacity value is less than or equal to 400 µg/dL, look for the serum iron value. If the serum iron value is less than 50 µg/dL, the diagnosis is Iron deficiency anemia (IDA). If the serum iron value is greater than or equal to 50 µg/dL, the diagnosis is Anemia of chronic disease (ACD). If the serum iron results are unavailable, the diagnosis is Inconclusive diagnosis. If the total iron binding capacity results are unavailable, the diagnosis is Inconclusive diagnosis. If the transferrin saturation value is greater than or equal to 20 %, the diagnosis is Anemia of chronic disease (ACD). If the transferrin saturation results are unavailable, the diagnosis is Inconclusive diagnosis.
   c) If the mean corpuscular volume value is greater than or equal to 80 fL but less than or equal to 100 fL, look for the reticulocyte count value. If the reticulocyte count value is less than or equal to 2 %, the diagnosis is Aplastic anemia. If the reticulocyte count value is greater than 2 %, the diagnosis is Hemolytic anemia. If the reticulocyte count results are unavailable, the diagnosis is Inconclusive diagnosis.
   d) If the mean corpuscular volume value is greater than 100 fL, look for the segmented neutrophils value. If the segmented neutrophils value is greater than 5 %, the diagnosis is Vitamin B12/Folate deficiency anemia. If the segmented neutrophils value is less than or equal to 5 %, the diagnosis is Unspecified anemia. If the segmented neutrophils results are unavailable, look for the folate value. If the folate value is less than 3 ng/mL, the diagnosis is Vitamin B12/Folate deficiency anemia. If the folate value is greater than or equal to 3 ng/mL, the diagnosis is Unspecified anemia. If the folate results are unavailable, the diagnosis is Inconclusive diagnosis.
4) If the hemoglobin value is greater than or equal to 12 g/dL but less than 13 g/dL, look for the gender of the patient. Here you can distinguish the following cases:
   a) If the gender is female, the diagnosis is No anemia.
   b) If the gender is male, do step 3.
For example, if you have that hemoglobin: 10g/dL, mean corpuscular volume: 83fL, reticulocyte count: 1.6%, the diagnosis will be Aplastic anemia.
";
    assert_eq!(text, expected);
}

#[test]
fn single_leaf_rendering() {
    let t = DecisionTree::from_parts(vec![Node::Leaf(Diagnosis::NoAnemia)], vec!["only".into()], 0, None).unwrap();
    let text = render_rules(&t, &RuleTemplate::default());
    assert!(text.contains("the diagnosis is No anemia."));
    assert!(!text.contains("1)"));
    assert_eq!(render_one_shot_example(&t, Diagnosis::NoAnemia).unwrap(), "The diagnosis will be No anemia.");
    assert_eq!(
        render_one_shot_example(&t, Diagnosis::AplasticAnemia),
        Err(TreeError::UnreachableDiagnosis(Diagnosis::AplasticAnemia))
    );
}

#[test]
fn one_shot_examples() {
    let t = shipped();
    assert_eq!(
        render_one_shot_example(&t, Diagnosis::AplasticAnemia).unwrap(),
        "For example, you have that hemoglobin: 10g/dL, mean corpuscular volume: 83fL, reticulocyte count: 1.6%. \
         The diagnosis will be Aplastic anemia."
    );
    assert_eq!(
        render_one_shot_example(&t, Diagnosis::NoAnemia).unwrap(),
        "For example, you have that hemoglobin: 15g/dL. The diagnosis will be No anemia."
    );
    for d in Diagnosis::ALL {
        let pairs = example_pairs(&t, d).unwrap();
        let v = values(&pairs);
        assert_eq!(t.evaluate_values(&v).0, d, "{d:?}");
    }
}
