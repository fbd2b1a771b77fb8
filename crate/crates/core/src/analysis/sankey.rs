use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{Terminal, Transcript};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SankeyNode {
    pub id: String,
    pub label: String,
    /// `lab`, `diagnosis` or `failure`.
    pub kind: String,
    /// Request position for lab nodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    /// Episodes passing through the node.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SankeyLink {
    pub source: String,
    pub target: String,
    pub value: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sankey {
    pub nodes: Vec<SankeyNode>,
    pub links: Vec<SankeyLink>,
}

fn terminal_node(t: &Terminal) -> (String, String, &'static str) {
    match t {
        Terminal::Diagnosis(d) => (format!("dx:{}", d.canonical_name()), d.display_name().to_string(), "diagnosis"),
        Terminal::Failure(r) => {
            let name = format!("{r:?}").to_lowercase();
            (format!("fail:{name}"), format!("failure ({name})"), "failure")
        }
    }
}

/// Flow of episodes through request positions into outcomes.
pub fn sankey_export(transcripts: &[Transcript]) -> Sankey {
    let mut nodes: BTreeMap<String, SankeyNode> = BTreeMap::new();
    let mut links: BTreeMap<(String, String), usize> = BTreeMap::new();
    for t in transcripts {
        let mut prev: Option<String> = None;
        let mut visit = |id: String, label: String, kind: &str, step: Option<usize>, prev: &mut Option<String>| {
            nodes
                .entry(id.clone())
                .or_insert_with(|| SankeyNode { id: id.clone(), label, kind: kind.to_string(), step, count: 0 })
                .count += 1;
            if let Some(p) = prev.take() {
                *links.entry((p, id.clone())).or_default() += 1;
            }
            *prev = Some(id);
        };
        for (i, f) in t.outcome.requests.iter().enumerate() {
            visit(format!("{i}:{}", f.canonical_name()), f.display_name().to_string(), "lab", Some(i), &mut prev);
        }
        let (id, label, kind) = terminal_node(&t.outcome.terminal);
        visit(id, label, kind, None, &mut prev);
    }
    let mut nodes: Vec<SankeyNode> = nodes.into_values().collect();
    nodes.sort_by(|a, b| (a.step.is_none(), a.step, &a.id).cmp(&(b.step.is_none(), b.step, &b.id)));
    Sankey { nodes, links: links.into_iter().map(|((source, target), value)| SankeyLink { source, target, value }).collect() }
}

/// Every node's count equals its inflow (after the first step) and, for
/// lab nodes, its outflow.
pub fn check_conservation(s: &Sankey) -> Result<(), String> {
    let mut inflow: BTreeMap<&str, usize> = BTreeMap::new();
    let mut outflow: BTreeMap<&str, usize> = BTreeMap::new();
    for l in &s.links {
        *inflow.entry(&l.target).or_default() += l.value;
        *outflow.entry(&l.source).or_default() += l.value;
    }
    for n in &s.nodes {
        let i = inflow.get(n.id.as_str()).copied().unwrap_or(0);
        let o = outflow.get(n.id.as_str()).copied().unwrap_or(0);
        match n.step {
            Some(step) => {
                if o != n.count {
                    return Err(format!("{}: {} episodes but outflow {o}", n.id, n.count));
                }
                if step > 0 && i != n.count {
                    return Err(format!("{}: {} episodes but inflow {i}", n.id, n.count));
                }
                if step == 0 && i != 0 {
                    return Err(format!("{}: first-step node has inflow {i}", n.id));
                }
            }
            None => {
                if o != 0 || i > n.count {
                    return Err(format!("{}: outcome node with inflow {i}, outflow {o}, count {}", n.id, n.count));
                }
            }
        }
    }
    Ok(())
}

const HTML_HEAD: &str = r#"<!DOCTYPE html>
<html><head><meta charset="utf-8"><title>Diagnostic pathways</title>
<style>body{font-family:sans-serif;margin:20px}text{font-size:11px}</style></head>
<body><h3>Diagnostic pathways</h3><svg id="chart"></svg>
<script id="data" type="application/json">"#;

const HTML_TAIL: &str = r#"</script>
<script>
const data = JSON.parse(document.getElementById('data').textContent);
const colW = 170, nodeW = 12, gap = 10, scale = 300 / Math.max(1, ...data.nodes.map(n => n.count));
const maxStep = Math.max(0, ...data.nodes.filter(n => n.step !== undefined).map(n => n.step));
const cols = {};
for (const n of data.nodes) {
  const c = n.step === undefined ? maxStep + 1 : n.step;
  (cols[c] = cols[c] || []).push(n);
}
const pos = {};
let height = 0;
for (const [c, ns] of Object.entries(cols)) {
  let y = 10;
  for (const n of ns) {
    const h = Math.max(2, n.count * scale);
    pos[n.id] = {x: 10 + c * colW, y, h, outY: y, inY: y};
    y += h + gap;
  }
  height = Math.max(height, y);
}
const svg = document.getElementById('chart');
svg.setAttribute('width', 40 + (maxStep + 2) * colW);
svg.setAttribute('height', height + 20);
const ns = 'http://www.w3.org/2000/svg';
for (const l of data.links) {
  const s = pos[l.source], t = pos[l.target], w = Math.max(1, l.value * scale);
  const p = document.createElementNS(ns, 'path');
  const x0 = s.x + nodeW, x1 = t.x, y0 = s.outY + w / 2, y1 = t.inY + w / 2;
  p.setAttribute('d', `M${x0},${y0} C${(x0 + x1) / 2},${y0} ${(x0 + x1) / 2},${y1} ${x1},${y1}`);
  p.setAttribute('stroke', '#9ab'); p.setAttribute('stroke-opacity', '0.5');
  p.setAttribute('stroke-width', w); p.setAttribute('fill', 'none');
  s.outY += w; t.inY += w;
  svg.appendChild(p);
}
for (const n of data.nodes) {
  const q = pos[n.id];
  const r = document.createElementNS(ns, 'rect');
  r.setAttribute('x', q.x); r.setAttribute('y', q.y); r.setAttribute('width', nodeW); r.setAttribute('height', q.h);
  r.setAttribute('fill', n.kind === 'lab' ? '#f28e2b' : n.kind === 'diagnosis' ? '#4e79a7' : '#999');
  svg.appendChild(r);
  const t = document.createElementNS(ns, 'text');
  t.setAttribute('x', q.x + nodeW + 3); t.setAttribute('y', q.y + q.h / 2 + 4);
  t.textContent = `${n.label} (${n.count})`;
  svg.appendChild(t);
}
</script></body></html>
"#;

/// Standalone page drawing the diagram from the embedded JSON.
pub fn sankey_html(s: &Sankey) -> String {
    let json = serde_json::to_string(s).expect("serializable").replace("</", "<\\/");
    format!("{HTML_HEAD}{json}{HTML_TAIL}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Diagnosis, FeatureId, Pathway};

    fn tr(requests: Vec<FeatureId>, d: Diagnosis) -> Transcript {
        Transcript {
            patient_id: "p".into(),
            policy: "x".into(),
            turns: vec![],
            outcome: Pathway::new(requests, Terminal::Diagnosis(d)),
            elapsed_ms: 0,
        }
    }

    #[test]
    fn identical_episodes_double_every_link() {
        let t = tr(vec![FeatureId::Hemoglobin, FeatureId::Mcv], Diagnosis::AplasticAnemia);
        let s = sankey_export(&[t.clone(), t]);
        assert_eq!(s.nodes.len(), 3);
        assert_eq!(s.links.len(), 2);
        assert!(s.links.iter().all(|l| l.value == 2));
        assert_eq!(s.nodes[0].kind, "lab");
        assert_eq!(s.nodes[2].kind, "diagnosis");
        check_conservation(&s).unwrap();
        assert!(sankey_html(&s).contains("\"links\""));
    }

    #[test]
    fn immediate_diagnosis_is_a_lone_node() {
        let s = sankey_export(&[tr(vec![], Diagnosis::NoAnemia)]);
        assert_eq!(s.nodes.len(), 1);
        assert!(s.links.is_empty());
        check_conservation(&s).unwrap();
    }

    #[test]
    fn tampering_breaks_conservation() {
        let t = tr(vec![FeatureId::Hemoglobin, FeatureId::Mcv], Diagnosis::AplasticAnemia);
        let mut s = sankey_export(&[t]);
        s.links[0].value = 3;
        assert!(check_conservation(&s).is_err());
    }
}
