use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::Deserialize;

use super::{Branch, CmpOp, Condition, DecisionTree, Node, NodeId, TreeError, TreeExample};
use crate::domain::{parse_diagnosis_name, Diagnosis, FeatureId, FeatureKind, FeatureValue};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    schema_version: u32,
    #[serde(default)]
    name: Option<String>,
    root: String,
    nodes: Vec<RawNode>,
    #[serde(default)]
    example: Option<RawExample>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: String,
    #[serde(default)]
    feature: Option<String>,
    #[serde(default)]
    unit: Option<String>,
    #[serde(default)]
    leaf: Option<String>,
    #[serde(default)]
    branches: Vec<RawBranch>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBranch {
    op: String,
    #[serde(default)]
    value: Option<Scalar>,
    #[serde(default)]
    low: Option<f64>,
    #[serde(default)]
    high: Option<f64>,
    #[serde(default)]
    bounds: Option<String>,
    #[serde(default)]
    next: Option<String>,
    #[serde(default)]
    diagnosis: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Scalar {
    Number(f64),
    Text(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExample {
    diagnosis: String,
    #[serde(default)]
    values: BTreeMap<String, Scalar>,
}

fn schema(msg: impl Into<String>) -> TreeError {
    TreeError::SchemaError(msg.into())
}

fn diagnosis_from(text: &str) -> Result<Diagnosis, TreeError> {
    Diagnosis::from_canonical(text)
        .or_else(|| parse_diagnosis_name(text).ok())
        .ok_or_else(|| schema(format!("unknown diagnosis `{text}`")))
}

fn feature_from(text: &str) -> Result<FeatureId, TreeError> {
    FeatureId::from_canonical(text).ok_or_else(|| TreeError::UnknownFeature(text.to_string()))
}

/// Parse and validate a tree spec (TOML, `schema_version = 1`).
pub fn load_tree(spec_text: &str) -> Result<DecisionTree, TreeError> {
    let raw: RawSpec = toml::from_str(spec_text).map_err(|e| schema(e.to_string()))?;
    if raw.schema_version != SCHEMA_VERSION {
        return Err(schema(format!("unsupported schema_version {}", raw.schema_version)));
    }
    let _ = raw.name;

    let mut index: HashMap<String, NodeId> = HashMap::new();
    for (i, n) in raw.nodes.iter().enumerate() {
        if index.insert(n.id.clone(), i).is_some() {
            return Err(schema(format!("duplicate node id `{}`", n.id)));
        }
    }
    let mut names: Vec<String> = raw.nodes.iter().map(|n| n.id.clone()).collect();
    let mut nodes: Vec<Node> = Vec::with_capacity(raw.nodes.len());
    let mut anonymous: Vec<(String, Diagnosis)> = Vec::new();

    for n in &raw.nodes {
        let node = match (&n.leaf, &n.feature) {
            (Some(_), Some(_)) => return Err(schema(format!("node `{}` has both leaf and feature", n.id))),
            (None, None) => return Err(schema(format!("node `{}` needs a leaf or a feature", n.id))),
            (Some(d), None) => {
                if !n.branches.is_empty() || n.unit.is_some() {
                    return Err(schema(format!("leaf `{}` cannot carry branches or a unit", n.id)));
                }
                Node::Leaf(diagnosis_from(d)?)
            }
            (None, Some(fname)) => {
                let feature = feature_from(fname)?;
                if let Some(u) = &n.unit {
                    if u != feature.unit() {
                        return Err(schema(format!(
                            "node `{}`: unit `{u}` does not match {feature} unit `{}`",
                            n.id,
                            feature.unit()
                        )));
                    }
                }
                let mut branches = Vec::with_capacity(n.branches.len());
                for (bi, b) in n.branches.iter().enumerate() {
                    let condition = parse_condition(&n.id, feature, b)?;
                    let target = match (&b.next, &b.diagnosis) {
                        (Some(next), None) => {
                            *index.get(next).ok_or_else(|| schema(format!("node `{}`: unknown target `{next}`", n.id)))?
                        }
                        (None, Some(d)) => {
                            let id = raw.nodes.len() + anonymous.len();
                            anonymous.push((format!("{}#{}", n.id, bi + 1), diagnosis_from(d)?));
                            id
                        }
                        _ => {
                            return Err(schema(format!(
                                "node `{}` branch {}: exactly one of `next` or `diagnosis` required",
                                n.id,
                                bi + 1
                            )))
                        }
                    };
                    branches.push(Branch { condition, target, implicit: false });
                }
                Node::Test { feature, branches }
            }
        };
        nodes.push(node);
    }
    for (name, d) in anonymous {
        names.push(name);
        nodes.push(Node::Leaf(d));
    }

    let root = *index.get(&raw.root).ok_or_else(|| schema(format!("unknown root `{}`", raw.root)))?;
    let example = raw.example.map(parse_example).transpose()?;
    DecisionTree::from_parts(nodes, names, root, example)
}

fn parse_condition(node: &str, feature: FeatureId, b: &RawBranch) -> Result<Condition, TreeError> {
    let err = |m: &str| schema(format!("node `{node}` op `{}`: {m}", b.op));
    let number = || match b.value {
        Some(Scalar::Number(v)) => Ok(v),
        _ => Err(err("numeric `value` required")),
    };
    let cmp = |op| Ok(Condition::Compare { op, value: number()? });
    match b.op.as_str() {
        "<" => cmp(CmpOp::Lt),
        "<=" | "≤" => cmp(CmpOp::Le),
        ">" => cmp(CmpOp::Gt),
        ">=" | "≥" => cmp(CmpOp::Ge),
        "=" | "==" => cmp(CmpOp::Eq),
        "in_closed_interval" | "between" => {
            let (low, high) = match (b.low, b.high) {
                (Some(l), Some(h)) => (l, h),
                _ => return Err(err("`low` and `high` required")),
            };
            let bounds = match (b.op.as_str(), b.bounds.as_deref()) {
                ("in_closed_interval", None) => "[]",
                ("in_closed_interval", Some(_)) => return Err(err("closed interval takes no `bounds`")),
                (_, Some(s)) => s,
                (_, None) => "[]",
            };
            let (low_closed, high_closed) = match bounds {
                "[]" => (true, true),
                "[)" => (true, false),
                "(]" => (false, true),
                "()" => (false, false),
                _ => return Err(err("`bounds` must be one of [] [) (] ()")),
            };
            Ok(Condition::Between { low, high, low_closed, high_closed })
        }
        "is_unavailable" => Ok(Condition::Unavailable),
        "equals_category" => match (&b.value, feature.kind()) {
            (Some(Scalar::Text(c)), FeatureKind::Categorical) => Ok(Condition::Category(c.to_lowercase())),
            (_, FeatureKind::Numeric) => Err(err("categories apply only to categorical features")),
            _ => Err(err("string `value` required")),
        },
        _ => Err(err("unknown operator")),
    }
}

fn parse_example(raw: RawExample) -> Result<TreeExample, TreeError> {
    let diagnosis = diagnosis_from(&raw.diagnosis)?;
    let mut hints = Vec::new();
    for (name, v) in raw.values {
        let f = feature_from(&name)?;
        let value = match v {
            Scalar::Number(x) => FeatureValue::Numeric(x),
            Scalar::Text(t) if t == "unavailable" => FeatureValue::Unavailable,
            Scalar::Text(t) => FeatureValue::Categorical(t),
        };
        hints.push((f, value));
    }
    hints.sort_by_key(|(f, _)| *f);
    Ok(TreeExample { diagnosis, hints })
}

fn toml_str(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

// Debug output of a finite f64 is always a valid TOML float.
fn toml_num(v: f64) -> String {
    format!("{v:?}")
}

pub(super) fn write_spec(tree: &DecisionTree) -> String {
    let (nodes, names) = tree.nodes_raw();
    let mut out = String::new();
    writeln!(out, "schema_version = {SCHEMA_VERSION}").unwrap();
    writeln!(out, "root = {}", toml_str(&names[tree.root()])).unwrap();
    for (id, node) in nodes.iter().enumerate() {
        if tree.is_implicit_leaf(id) {
            continue;
        }
        out.push_str("\n[[nodes]]\n");
        writeln!(out, "id = {}", toml_str(&names[id])).unwrap();
        match node {
            Node::Leaf(d) => writeln!(out, "leaf = {}", toml_str(d.canonical_name())).unwrap(),
            Node::Test { feature, branches } => {
                writeln!(out, "feature = {}", toml_str(feature.canonical_name())).unwrap();
                if !feature.unit().is_empty() {
                    writeln!(out, "unit = {}", toml_str(feature.unit())).unwrap();
                }
                out.push_str("branches = [\n");
                for b in branches.iter().filter(|b| !b.implicit) {
                    let cond = match &b.condition {
                        Condition::Compare { op, value } => {
                            format!("op = {}, value = {}", toml_str(op.symbol()), toml_num(*value))
                        }
                        Condition::Between { low, high, low_closed, high_closed } => format!(
                            "op = \"between\", low = {}, high = {}, bounds = \"{}{}\"",
                            toml_num(*low),
                            toml_num(*high),
                            if *low_closed { '[' } else { '(' },
                            if *high_closed { ']' } else { ')' }
                        ),
                        Condition::Unavailable => "op = \"is_unavailable\"".to_string(),
                        Condition::Category(c) => format!("op = \"equals_category\", value = {}", toml_str(c)),
                    };
                    writeln!(out, "  {{ {cond}, next = {} }},", toml_str(&names[b.target])).unwrap();
                }
                out.push_str("]\n");
            }
        }
    }
    if let Some(ex) = tree.example() {
        out.push_str("\n[example]\n");
        writeln!(out, "diagnosis = {}", toml_str(ex.diagnosis.canonical_name())).unwrap();
        out.push_str("\n[example.values]\n");
        for (f, v) in &ex.hints {
            let text = match v {
                FeatureValue::Numeric(x) => toml_num(*x),
                FeatureValue::Categorical(c) => toml_str(c),
                FeatureValue::Unavailable => toml_str("unavailable"),
            };
            writeln!(out, "{} = {text}", f.canonical_name()).unwrap();
        }
    }
    out
}
