//! Decision trees over patient features: validation, evaluation as a
//! labeling oracle, path enumeration and natural-language rendering.

mod interval;
mod load;
mod render;

use std::collections::{BTreeSet, HashMap};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{
    format_number, Diagnosis, FeatureId, FeatureKind, FeatureValue, FeatureValues, Pathway, PatientRecord, Terminal,
};

pub use interval::{coverage_gaps, Interval};
pub use load::{load_tree, SCHEMA_VERSION};
pub use render::{example_pairs, render_example_pairs, render_one_shot_example, render_rules, RuleTemplate, PLACEHOLDERS};

/// Text of the shipped default anemia tree.
pub const DEFAULT_TREE_TOML: &str = include_str!("../../trees/anemia.tree.toml");

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("node `{node}`: branches are not exhaustive ({detail})")]
    NonExhaustiveBranches { node: String, detail: String },
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("cycle detected through node `{0}`")]
    CycleDetected(String),
    #[error("diagnosis `{0}` is not reachable in this tree")]
    UnreachableDiagnosis(Diagnosis),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "=",
        }
    }

    pub fn words(self) -> &'static str {
        match self {
            CmpOp::Lt => "less than",
            CmpOp::Le => "less than or equal to",
            CmpOp::Gt => "greater than",
            CmpOp::Ge => "greater than or equal to",
            CmpOp::Eq => "equal to",
        }
    }

    pub fn holds(self, x: f64, threshold: f64) -> bool {
        match self {
            CmpOp::Lt => x < threshold,
            CmpOp::Le => x <= threshold,
            CmpOp::Gt => x > threshold,
            CmpOp::Ge => x >= threshold,
            CmpOp::Eq => x == threshold,
        }
    }

    /// The operator that holds exactly when this one fails (ignoring `=`).
    pub fn negated(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ge => CmpOp::Lt,
            CmpOp::Eq => CmpOp::Eq,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Condition {
    Compare { op: CmpOp, value: f64 },
    Between { low: f64, high: f64, low_closed: bool, high_closed: bool },
    Unavailable,
    Category(String),
}

impl Condition {
    pub fn in_closed_interval(low: f64, high: f64) -> Self {
        Condition::Between { low, high, low_closed: true, high_closed: true }
    }

    /// Numeric range covered by this condition, if it is numeric.
    pub fn interval(&self) -> Option<Interval> {
        Some(match *self {
            Condition::Compare { op, value } => match op {
                CmpOp::Lt => Interval::below(value, false),
                CmpOp::Le => Interval::below(value, true),
                CmpOp::Gt => Interval::above(value, false),
                CmpOp::Ge => Interval::above(value, true),
                CmpOp::Eq => Interval::point(value),
            },
            Condition::Between { low, high, low_closed, high_closed } => Interval::new(low, low_closed, high, high_closed),
            _ => return None,
        })
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Condition::Compare { .. } | Condition::Between { .. })
    }

    /// Does a recorded value satisfy this condition?
    pub fn matches(&self, value: &FeatureValue) -> bool {
        match (self, value) {
            (Condition::Unavailable, FeatureValue::Unavailable) => true,
            (Condition::Category(c), FeatureValue::Categorical(v)) => c == v,
            (_, FeatureValue::Numeric(x)) => self.interval().is_some_and(|i| i.contains(*x)),
            _ => false,
        }
    }

    /// Comparison phrase without the subject, e.g. `less than 80 fL`.
    pub fn phrase(&self, unit: &str) -> String {
        let with_unit = |v: f64| {
            if unit.is_empty() {
                format_number(v)
            } else {
                format!("{} {unit}", format_number(v))
            }
        };
        match self {
            Condition::Compare { op, value } => format!("{} {}", op.words(), with_unit(*value)),
            Condition::Between { low, high, low_closed, high_closed } => {
                let lo = if *low_closed { CmpOp::Ge } else { CmpOp::Gt };
                let hi = if *high_closed { CmpOp::Le } else { CmpOp::Lt };
                format!("{} {} but {} {}", lo.words(), with_unit(*low), hi.words(), with_unit(*high))
            }
            Condition::Unavailable => "unavailable".to_string(),
            Condition::Category(c) => c.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub condition: Condition,
    pub target: NodeId,
    /// Added by validation to route unavailable values to the default leaf.
    pub implicit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf(Diagnosis),
    Test { feature: FeatureId, branches: Vec<Branch> },
}

/// Designated example path and preferred values for rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeExample {
    pub diagnosis: Diagnosis,
    pub hints: Vec<(FeatureId, FeatureValue)>,
}

/// A validated, immutable decision tree (nodes may be shared, so this is a
/// rooted DAG).
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    names: Vec<String>,
    root: NodeId,
    example: Option<TreeExample>,
    implicit_leaf: Option<NodeId>,
    digest: String,
}

/// Diagnosis used for unavailable values on nodes without an explicit branch.
pub const UNAVAILABLE_DEFAULT: Diagnosis = Diagnosis::InconclusiveDiagnosis;

/// One root-to-leaf route: `(test node, branch index)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct TreePath {
    pub steps: Vec<(NodeId, usize)>,
    pub leaf: NodeId,
    pub diagnosis: Diagnosis,
}

impl TreePath {
    pub fn features(&self, tree: &DecisionTree) -> Vec<FeatureId> {
        self.steps.iter().map(|&(n, _)| tree.feature_of(n).expect("path steps are test nodes")).collect()
    }
}

impl DecisionTree {
    /// Validate raw nodes and build a tree. `names` label nodes in messages.
    pub fn from_parts(
        nodes: Vec<Node>,
        names: Vec<String>,
        root: NodeId,
        example: Option<TreeExample>,
    ) -> Result<Self, TreeError> {
        if names.len() != nodes.len() {
            return Err(TreeError::SchemaError("one name per node required".into()));
        }
        if root >= nodes.len() {
            return Err(TreeError::SchemaError("root out of range".into()));
        }
        for (id, node) in nodes.iter().enumerate() {
            validate_node(&names[id], node, nodes.len())?;
        }
        check_acyclic(&nodes, &names, root)?;
        let reachable = reachable_from(&nodes, root);
        if let Some(id) = (0..nodes.len()).find(|id| !reachable[*id]) {
            return Err(TreeError::SchemaError(format!("node `{}` is unreachable from the root", names[id])));
        }

        let mut tree = DecisionTree { nodes, names, root, example: None, implicit_leaf: None, digest: String::new() };
        tree.add_implicit_branches();
        if let Some(ex) = example {
            for (f, v) in &ex.hints {
                v.check_for(*f).map_err(|e| TreeError::SchemaError(format!("example: {e}")))?;
            }
            if !tree.paths().iter().any(|p| p.diagnosis == ex.diagnosis) {
                return Err(TreeError::SchemaError(format!("example diagnosis `{}` has no path", ex.diagnosis.canonical_name())));
            }
            tree.example = Some(ex);
        }
        tree.digest = hex::encode(Sha256::digest(tree.to_spec_toml().as_bytes()));
        Ok(tree)
    }

    fn add_implicit_branches(&mut self) {
        let needs: Vec<NodeId> = (0..self.nodes.len())
            .filter(|&id| match &self.nodes[id] {
                Node::Test { branches, .. } => !branches.iter().any(|b| b.condition == Condition::Unavailable),
                Node::Leaf(_) => false,
            })
            .collect();
        if needs.is_empty() {
            return;
        }
        let leaf = self.nodes.len();
        self.nodes.push(Node::Leaf(UNAVAILABLE_DEFAULT));
        self.names.push("(default unavailable)".into());
        self.implicit_leaf = Some(leaf);
        for id in needs {
            if let Node::Test { branches, .. } = &mut self.nodes[id] {
                branches.push(Branch { condition: Condition::Unavailable, target: leaf, implicit: true });
            }
        }
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.names[id]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_implicit_leaf(&self, id: NodeId) -> bool {
        self.implicit_leaf == Some(id)
    }

    pub fn example(&self) -> Option<&TreeExample> {
        self.example.as_ref()
    }

    /// SHA-256 over the canonical spec text.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn feature_of(&self, id: NodeId) -> Option<FeatureId> {
        match &self.nodes[id] {
            Node::Test { feature, .. } => Some(*feature),
            Node::Leaf(_) => None,
        }
    }

    /// Branches including the implicit unavailable default.
    pub fn branches(&self, id: NodeId) -> &[Branch] {
        match &self.nodes[id] {
            Node::Test { branches, .. } => branches,
            Node::Leaf(_) => &[],
        }
    }

    pub fn explicit_branches(&self, id: NodeId) -> impl Iterator<Item = (usize, &Branch)> {
        self.branches(id).iter().enumerate().filter(|(_, b)| !b.implicit)
    }

    /// Branch taken at test node `id` for `value`. Values of the wrong kind
    /// and unknown categories route like unavailable ones.
    pub fn select_branch(&self, id: NodeId, value: &FeatureValue) -> usize {
        let branches = self.branches(id);
        assert!(!branches.is_empty(), "select_branch on a leaf");
        let fallback = || {
            branches
                .iter()
                .position(|b| b.condition == Condition::Unavailable)
                .expect("validated tree has an unavailable branch on every test")
        };
        match value {
            FeatureValue::Unavailable => fallback(),
            _ => branches.iter().position(|b| b.condition.matches(value)).unwrap_or_else(fallback),
        }
    }

    /// Follow the tree for `values`, returning the visited `(node, branch)`
    /// steps and the leaf reached.
    pub fn walk(&self, values: &FeatureValues) -> (Vec<(NodeId, usize)>, NodeId) {
        let mut steps = Vec::new();
        let mut at = self.root;
        while let Node::Test { feature, branches } = &self.nodes[at] {
            let b = self.select_branch(at, values.get(*feature));
            steps.push((at, b));
            at = branches[b].target;
        }
        (steps, at)
    }

    pub fn evaluate_values(&self, values: &FeatureValues) -> (Diagnosis, Pathway) {
        let (steps, leaf) = self.walk(values);
        let d = self.leaf_diagnosis(leaf);
        let requests = steps.iter().map(|&(n, _)| self.feature_of(n).unwrap()).collect();
        (d, Pathway::new(requests, Terminal::Diagnosis(d)))
    }

    pub fn evaluate(&self, patient: &PatientRecord) -> (Diagnosis, Pathway) {
        self.evaluate_values(&patient.values)
    }

    fn leaf_diagnosis(&self, id: NodeId) -> Diagnosis {
        match self.nodes[id] {
            Node::Leaf(d) => d,
            Node::Test { .. } => unreachable!("walk ends at a leaf"),
        }
    }

    /// Every root-to-leaf path over explicit branches, depth first in branch
    /// order.
    pub fn paths(&self) -> Vec<TreePath> {
        let mut out = Vec::new();
        let mut stack = Vec::new();
        self.collect_paths(self.root, &mut stack, &mut out);
        out
    }

    fn collect_paths(&self, at: NodeId, stack: &mut Vec<(NodeId, usize)>, out: &mut Vec<TreePath>) {
        match &self.nodes[at] {
            Node::Leaf(d) => out.push(TreePath { steps: stack.clone(), leaf: at, diagnosis: *d }),
            Node::Test { branches, .. } => {
                for (i, b) in branches.iter().enumerate() {
                    if b.implicit {
                        continue;
                    }
                    stack.push((at, i));
                    self.collect_paths(b.target, stack, out);
                    stack.pop();
                }
            }
        }
    }

    /// Longest number of test nodes on any root-to-leaf route.
    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, at: NodeId, memo: &mut HashMap<NodeId, usize>) -> usize {
            if let Some(&d) = memo.get(&at) {
                return d;
            }
            let d = match &t.nodes[at] {
                Node::Leaf(_) => 0,
                Node::Test { branches, .. } => 1 + branches.iter().map(|b| go(t, b.target, memo)).max().unwrap_or(0),
            };
            memo.insert(at, d);
            d
        }
        go(self, self.root, &mut HashMap::new())
    }

    /// Distinct diagnoses in the order their leaves are first met.
    pub fn leaf_diagnoses(&self) -> Vec<Diagnosis> {
        let mut seen = Vec::new();
        for p in self.paths() {
            if !seen.contains(&p.diagnosis) {
                seen.push(p.diagnosis);
            }
        }
        seen
    }

    /// Features tested anywhere in the tree, in [`FeatureId`] order.
    pub fn features(&self) -> Vec<FeatureId> {
        let set: BTreeSet<FeatureId> = (0..self.nodes.len()).filter_map(|id| self.feature_of(id)).collect();
        set.into_iter().collect()
    }

    /// Canonical spec text; loading it back yields an equal tree.
    pub fn to_spec_toml(&self) -> String {
        load::write_spec(self)
    }

    pub(crate) fn nodes_raw(&self) -> (&[Node], &[String]) {
        (&self.nodes, &self.names)
    }
}

fn validate_node(name: &str, node: &Node, n_nodes: usize) -> Result<(), TreeError> {
    let Node::Test { feature, branches } = node else {
        return Ok(());
    };
    let schema = |msg: String| TreeError::SchemaError(format!("node `{name}`: {msg}"));
    if branches.iter().any(|b| b.target >= n_nodes) {
        return Err(schema("branch target out of range".into()));
    }
    let unavailable = branches.iter().filter(|b| b.condition == Condition::Unavailable).count();
    if unavailable > 1 {
        return Err(schema("more than one unavailable branch".into()));
    }
    match feature.kind() {
        FeatureKind::Numeric => {
            let mut parts = Vec::new();
            for b in branches {
                match &b.condition {
                    Condition::Category(c) => return Err(schema(format!("category `{c}` on numeric feature {feature}"))),
                    Condition::Compare { value, .. } if !value.is_finite() => {
                        return Err(schema("threshold must be finite".into()))
                    }
                    Condition::Between { low, high, .. } => {
                        if !low.is_finite() || !high.is_finite() {
                            return Err(schema("interval bounds must be finite".into()));
                        }
                        if low >= high {
                            return Err(schema(format!("interval low {low} must be below high {high}")));
                        }
                    }
                    _ => {}
                }
                if let Some(i) = b.condition.interval() {
                    parts.push(i);
                }
            }
            for i in 0..parts.len() {
                for j in i + 1..parts.len() {
                    if parts[i].overlaps(&parts[j]) {
                        return Err(schema(format!("branch ranges {} and {} overlap", parts[i], parts[j])));
                    }
                }
            }
            let gaps = coverage_gaps(&parts);
            if !gaps.is_empty() {
                let detail = gaps.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(", ");
                return Err(TreeError::NonExhaustiveBranches { node: name.to_string(), detail: format!("uncovered {detail}") });
            }
        }
        FeatureKind::Categorical => {
            let mut seen = BTreeSet::new();
            for b in branches {
                match &b.condition {
                    Condition::Category(c) => {
                        if !feature.categories().contains(&c.as_str()) {
                            return Err(schema(format!("unknown category `{c}` for {feature}")));
                        }
                        if !seen.insert(c.as_str()) {
                            return Err(schema(format!("category `{c}` listed twice")));
                        }
                    }
                    Condition::Unavailable => {}
                    _ => return Err(schema(format!("numeric comparison on categorical feature {feature}"))),
                }
            }
            let missing: Vec<&str> = feature.categories().iter().copied().filter(|c| !seen.contains(c)).collect();
            if !missing.is_empty() {
                return Err(TreeError::NonExhaustiveBranches {
                    node: name.to_string(),
                    detail: format!("missing categories {}", missing.join(", ")),
                });
            }
        }
    }
    Ok(())
}

fn check_acyclic(nodes: &[Node], names: &[String], root: NodeId) -> Result<(), TreeError> {
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; nodes.len()];
    let mut stack: Vec<(NodeId, usize)> = vec![(root, 0)];
    state[root] = 1;
    while let Some((at, next)) = stack.pop() {
        let targets: Vec<NodeId> = match &nodes[at] {
            Node::Test { branches, .. } => branches.iter().map(|b| b.target).collect(),
            Node::Leaf(_) => Vec::new(),
        };
        if next < targets.len() {
            stack.push((at, next + 1));
            let t = targets[next];
            match state[t] {
                1 => return Err(TreeError::CycleDetected(names[t].clone())),
                0 => {
                    state[t] = 1;
                    stack.push((t, 0));
                }
                _ => {}
            }
        } else {
            state[at] = 2;
        }
    }
    Ok(())
}

fn reachable_from(nodes: &[Node], root: NodeId) -> Vec<bool> {
    let mut seen = vec![false; nodes.len()];
    let mut todo = vec![root];
    while let Some(at) = todo.pop() {
        if std::mem::replace(&mut seen[at], true) {
            continue;
        }
        if let Node::Test { branches, .. } = &nodes[at] {
            todo.extend(branches.iter().map(|b| b.target));
        }
    }
    seen
}

/// Per-feature constraint accumulated along a path.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureConstraint {
    Free,
    Numeric(Interval),
    Unavailable,
    Categories(Vec<String>),
    /// The path tests this feature in mutually exclusive ways.
    Infeasible,
}

impl FeatureConstraint {
    fn and(&self, cond: &Condition) -> FeatureConstraint {
        use FeatureConstraint as C;
        match (self, cond) {
            (C::Infeasible, _) => C::Infeasible,
            (C::Free, Condition::Unavailable) | (C::Unavailable, Condition::Unavailable) => C::Unavailable,
            (C::Unavailable, _) | (_, Condition::Unavailable) => C::Infeasible,
            (C::Free, Condition::Category(c)) => C::Categories(vec![c.clone()]),
            (C::Categories(cs), Condition::Category(c)) => {
                if cs.contains(c) {
                    C::Categories(vec![c.clone()])
                } else {
                    C::Infeasible
                }
            }
            (C::Free, c) => C::Numeric(c.interval().unwrap()),
            (C::Numeric(i), c) if c.is_numeric() => {
                let j = i.intersect(&c.interval().unwrap());
                if j.is_empty() {
                    C::Infeasible
                } else {
                    C::Numeric(j)
                }
            }
            _ => C::Infeasible,
        }
    }
}

/// Conjunction of branch conditions along one path, per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBox {
    constraints: Vec<FeatureConstraint>,
}

impl PathBox {
    pub fn of(tree: &DecisionTree, path: &TreePath) -> PathBox {
        let mut constraints = vec![FeatureConstraint::Free; FeatureId::COUNT];
        for &(node, b) in &path.steps {
            let f = tree.feature_of(node).unwrap();
            let cond = &tree.branches(node)[b].condition;
            constraints[f.index()] = constraints[f.index()].and(cond);
        }
        PathBox { constraints }
    }

    pub fn get(&self, feature: FeatureId) -> &FeatureConstraint {
        &self.constraints[feature.index()]
    }

    pub fn is_feasible(&self) -> bool {
        !self.constraints.contains(&FeatureConstraint::Infeasible)
    }

    /// Can `value` for `feature` occur on this path?
    pub fn admits(&self, feature: FeatureId, value: &FeatureValue) -> bool {
        match (self.get(feature), value) {
            (FeatureConstraint::Free, _) => true,
            (FeatureConstraint::Numeric(i), FeatureValue::Numeric(x)) => i.contains(*x),
            (FeatureConstraint::Unavailable, FeatureValue::Unavailable) => true,
            (FeatureConstraint::Categories(cs), FeatureValue::Categorical(c)) => cs.contains(c),
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests;
