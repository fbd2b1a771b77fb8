use std::collections::HashMap;

use super::{Branch, Condition, DecisionTree, FeatureConstraint, Interval, Node, NodeId, PathBox, TreeError};
use crate::domain::{format_number, Diagnosis, FeatureId, FeatureKind, FeatureValue};

/// Sentence fragments with the four placeholder slots: `##` a feature, `**`
/// an operator, `++` a value and `@` a diagnosis. Each occurrence of a slot
/// takes the next value supplied for it.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleTemplate {
    pub preamble: String,
    pub first_rule: String,
    pub numeric_condition: String,
    pub between_condition: String,
    pub category_condition: String,
    pub unavailable_condition: String,
    pub leaf_outcome: String,
    pub lookup_outcome: String,
    pub cases_intro: String,
    pub goto_outcome: String,
    pub single_leaf: String,
    pub example: String,
    /// Close the rules with the designated example sentence.
    pub with_example: bool,
}

impl Default for RuleTemplate {
    fn default() -> Self {
        RuleTemplate {
            preamble: "Usually, you make a diagnosis based on the following rules:".into(),
            first_rule: "Look for the ## first.".into(),
            numeric_condition: "If the ## value is ** ++".into(),
            between_condition: "If the ## value is ** ++ but ** ++".into(),
            category_condition: "If the ## is ++".into(),
            unavailable_condition: "If the ## results are unavailable".into(),
            leaf_outcome: ", the diagnosis is @.".into(),
            lookup_outcome: ", look for the ##.".into(),
            cases_intro: " Here you can distinguish the following cases:".into(),
            goto_outcome: ", do step ++.".into(),
            single_leaf: "In every case, the diagnosis is @.".into(),
            example: "For example, if you have that ++, the diagnosis will be @.".into(),
            with_example: true,
        }
    }
}

impl RuleTemplate {
    pub fn without_example(mut self) -> Self {
        self.with_example = false;
        self
    }
}

pub const PLACEHOLDERS: [&str; 4] = ["##", "**", "++", "@"];

#[derive(Default)]
struct Slots<'a> {
    feature: Vec<&'a str>,
    operator: Vec<&'a str>,
    value: Vec<&'a str>,
    diagnosis: Vec<&'a str>,
}

/// Single pass over `template`; substituted text is never rescanned and a
/// slot with no value left renders empty.
fn fill(template: &str, slots: Slots<'_>) -> String {
    let mut queues =
        [slots.feature.into_iter(), slots.operator.into_iter(), slots.value.into_iter(), slots.diagnosis.into_iter()];
    let mut out = String::with_capacity(template.len() + 32);
    let mut rest = template;
    'outer: while !rest.is_empty() {
        for (k, token) in PLACEHOLDERS.iter().enumerate() {
            if let Some(after) = rest.strip_prefix(token) {
                out.push_str(queues[k].next().unwrap_or(""));
                rest = after;
                continue 'outer;
            }
        }
        let ch = rest.chars().next().unwrap();
        out.push(ch);
        rest = &rest[ch.len_utf8()..];
    }
    out
}

fn lookup_phrase(feature: FeatureId) -> String {
    match feature.kind() {
        FeatureKind::Categorical => format!("{} of the patient", feature.display_name()),
        FeatureKind::Numeric => format!("{} value", feature.display_name()),
    }
}

fn with_unit(v: f64, feature: FeatureId) -> String {
    if feature.unit().is_empty() {
        format_number(v)
    } else {
        format!("{} {}", format_number(v), feature.unit())
    }
}

fn condition_text(tpl: &RuleTemplate, feature: FeatureId, cond: &Condition) -> String {
    let name = feature.display_name();
    match cond {
        Condition::Compare { op, value } => {
            let v = with_unit(*value, feature);
            fill(
                &tpl.numeric_condition,
                Slots { feature: vec![name], operator: vec![op.words()], value: vec![&v], ..Default::default() },
            )
        }
        Condition::Between { low, high, low_closed, high_closed } => {
            let lo_op = if *low_closed { "greater than or equal to" } else { "greater than" };
            let hi_op = if *high_closed { "less than or equal to" } else { "less than" };
            let (lo, hi) = (with_unit(*low, feature), with_unit(*high, feature));
            fill(
                &tpl.between_condition,
                Slots { feature: vec![name], operator: vec![lo_op, hi_op], value: vec![&lo, &hi], ..Default::default() },
            )
        }
        Condition::Category(c) => {
            fill(&tpl.category_condition, Slots { feature: vec![name], value: vec![c], ..Default::default() })
        }
        Condition::Unavailable => fill(&tpl.unavailable_condition, Slots { feature: vec![name], ..Default::default() }),
    }
}

fn letters(mut i: usize) -> String {
    let mut s = Vec::new();
    loop {
        s.push(b'a' + (i % 26) as u8);
        if i < 26 {
            break;
        }
        i = i / 26 - 1;
    }
    s.reverse();
    String::from_utf8(s).unwrap()
}

struct Renderer<'a> {
    tree: &'a DecisionTree,
    tpl: &'a RuleTemplate,
    labels: HashMap<NodeId, String>,
}

impl Renderer<'_> {
    fn feature(&self, id: NodeId) -> FeatureId {
        self.tree.feature_of(id).unwrap()
    }

    fn leaf_text(&self, d: Diagnosis) -> String {
        fill(&self.tpl.leaf_outcome, Slots { diagnosis: vec![d.display_name()], ..Default::default() })
    }

    fn lookup_text(&self, target: NodeId) -> String {
        let phrase = lookup_phrase(self.feature(target));
        fill(&self.tpl.lookup_outcome, Slots { feature: vec![&phrase], ..Default::default() })
    }

    fn goto_text(&self, label: &str) -> String {
        fill(&self.tpl.goto_outcome, Slots { value: vec![label], ..Default::default() })
    }

    /// Full sentence for one branch; unseen subtrees expand inline under
    /// `owner` (the label of the enclosing rule or item).
    fn branch_sentence(&mut self, node: NodeId, branch: &Branch, owner: &str) -> String {
        let mut s = condition_text(self.tpl, self.feature(node), &branch.condition);
        match self.tree.node(branch.target) {
            Node::Leaf(d) => s.push_str(&self.leaf_text(*d)),
            Node::Test { .. } => {
                if let Some(label) = self.labels.get(&branch.target) {
                    let label = label.clone();
                    s.push_str(&self.goto_text(&label));
                } else {
                    self.labels.insert(branch.target, owner.to_string());
                    s.push_str(&self.lookup_text(branch.target));
                    for (_, b) in self.tree.explicit_branches(branch.target) {
                        s.push(' ');
                        let inner = self.branch_sentence(branch.target, b, owner);
                        s.push_str(&inner);
                    }
                }
            }
        }
        s
    }

    fn render(mut self) -> Vec<String> {
        let tree = self.tree;
        let tpl = self.tpl;
        let mut lines = vec![tpl.preamble.clone()];
        let root = tree.root();
        if let Node::Leaf(d) = tree.node(root) {
            lines.push(fill(&tpl.single_leaf, Slots { diagnosis: vec![d.display_name()], ..Default::default() }));
            return lines;
        }
        self.labels.insert(root, "1".into());
        let phrase = lookup_phrase(self.feature(root));
        lines.push(format!("1) {}", fill(&tpl.first_rule, Slots { feature: vec![&phrase], ..Default::default() })));

        let branches: Vec<&Branch> = tree.explicit_branches(root).map(|(_, b)| b).collect();
        let (leaves, inner): (Vec<&Branch>, Vec<&Branch>) =
            branches.into_iter().partition(|b| matches!(tree.node(b.target), Node::Leaf(_)));
        let mut n = 2;
        if !leaves.is_empty() {
            let text: Vec<String> = leaves.iter().map(|b| self.branch_sentence(root, b, "2")).collect();
            lines.push(format!("2) {}", text.join(" ")));
            n = 3;
        }
        for b in inner {
            let step = n.to_string();
            let mut line = condition_text(tpl, self.feature(root), &b.condition);
            if let Some(label) = self.labels.get(&b.target) {
                line.push_str(&self.goto_text(&label.clone()));
                lines.push(format!("{n}) {line}"));
            } else {
                self.labels.insert(b.target, step.clone());
                line.push_str(&self.lookup_text(b.target));
                line.push_str(&tpl.cases_intro);
                lines.push(format!("{n}) {line}"));
                let items: Vec<&Branch> = tree.explicit_branches(b.target).map(|(_, c)| c).collect();
                for (i, c) in items.into_iter().enumerate() {
                    let letter = letters(i);
                    let text = self.branch_sentence(b.target, c, &format!("{step}{letter}"));
                    lines.push(format!("   {letter}) {text}"));
                }
            }
            n += 1;
        }
        lines
    }
}

/// Numbered natural-language rules for `tree`.
pub fn render_rules(tree: &DecisionTree, template: &RuleTemplate) -> String {
    let mut lines = Renderer { tree, tpl: template, labels: HashMap::new() }.render();
    if template.with_example && !matches!(tree.node(tree.root()), Node::Leaf(_)) {
        let d = tree.example().map(|e| e.diagnosis).unwrap_or_else(|| tree.paths()[0].diagnosis);
        if let Ok(pairs) = example_pairs(tree, d) {
            let listing = render_example_pairs(&pairs);
            lines.push(fill(
                &template.example,
                Slots { value: vec![&listing], diagnosis: vec![d.display_name()], ..Default::default() },
            ));
        }
    }
    let mut text = lines.join("\n");
    text.push('\n');
    text
}

/// Compact example listing: `hemoglobin: 10g/dL, gender: male`.
pub fn render_example_pairs(pairs: &[(FeatureId, FeatureValue)]) -> String {
    pairs
        .iter()
        .map(|(f, v)| match v {
            FeatureValue::Numeric(x) => format!("{}: {}{}", f.display_name(), format_number(*x), f.unit()),
            _ => format!("{}: {}", f.display_name(), v.value_text()),
        })
        .collect::<Vec<_>>()
        .join(", ")
}

/// One-shot example sentence for the first path reaching `diagnosis`.
pub fn render_one_shot_example(tree: &DecisionTree, diagnosis: Diagnosis) -> Result<String, TreeError> {
    let pairs = example_pairs(tree, diagnosis)?;
    let tail = format!("The diagnosis will be {}.", diagnosis.display_name());
    if pairs.is_empty() {
        Ok(tail)
    } else {
        Ok(format!("For example, you have that {}. {tail}", render_example_pairs(&pairs)))
    }
}

/// Feature values along the first feasible path to `diagnosis`, one per
/// tested feature in path order. Hints from the tree's example are used
/// when they satisfy the path.
pub fn example_pairs(tree: &DecisionTree, diagnosis: Diagnosis) -> Result<Vec<(FeatureId, FeatureValue)>, TreeError> {
    let hints: &[(FeatureId, FeatureValue)] = tree.example().map(|e| e.hints.as_slice()).unwrap_or(&[]);
    for path in tree.paths().into_iter().filter(|p| p.diagnosis == diagnosis) {
        let bx = PathBox::of(tree, &path);
        if !bx.is_feasible() {
            continue;
        }
        let mut pairs: Vec<(FeatureId, FeatureValue)> = Vec::new();
        for f in path.features(tree) {
            if pairs.iter().any(|(g, _)| *g == f) {
                continue;
            }
            let hinted = hints.iter().find(|(g, v)| *g == f && bx.admits(f, v)).map(|(_, v)| v.clone());
            let value = match hinted {
                Some(v) => v,
                None => match bx.get(f) {
                    FeatureConstraint::Numeric(i) => FeatureValue::Numeric(representative(i)),
                    FeatureConstraint::Unavailable => FeatureValue::Unavailable,
                    FeatureConstraint::Categories(cs) => FeatureValue::Categorical(cs[0].clone()),
                    FeatureConstraint::Free | FeatureConstraint::Infeasible => unreachable!("tested on a feasible path"),
                },
            };
            pairs.push((f, value));
        }
        return Ok(pairs);
    }
    Err(TreeError::UnreachableDiagnosis(diagnosis))
}

/// A round, typical-looking value inside a non-empty interval.
pub(crate) fn representative(i: &Interval) -> f64 {
    let round1 = |x: f64| (x * 10.0).round() / 10.0;
    let candidates: Vec<f64> = match (i.lo.is_finite(), i.hi.is_finite()) {
        (true, true) => vec![round1((i.lo + i.hi) / 2.0), (i.lo + i.hi) / 2.0],
        (true, false) => {
            let lo = i.lo;
            vec![round1(if lo > 0.0 { lo * 1.15 } else { lo + 1.0 }), lo + 1.0, lo + 0.5]
        }
        (false, true) => {
            let hi = i.hi;
            vec![round1(if hi > 0.0 { hi * 0.85 } else { hi - 1.0 }), hi - 1.0, hi - 0.5]
        }
        (false, false) => vec![0.0],
    };
    candidates.into_iter().find(|x| i.contains(*x)).unwrap_or(if i.lo_closed { i.lo } else { i.hi })
}
