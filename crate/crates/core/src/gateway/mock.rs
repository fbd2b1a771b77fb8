use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::client::{ChatTransport, TransportError};
use super::wire::{ChatMessage, ChatRequest, ChatResponse};
use crate::dialogue::{claim_text, numeric_neighbours};
use crate::domain::{AliasTable, Diagnosis, FeatureId, FeatureKind, FeatureValue};
use crate::dtree::{DecisionTree, Node, NodeId};

/// Scripted misbehaviour. Turn indices count assistant replies from 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MockFault {
    /// Take a neighbouring numeric branch at the `step`-th decision.
    ComparisonFlip {
        step: usize,
    },
    PrematureDiagnosis {
        turn: usize,
        diagnosis: Diagnosis,
    },
    OffListRequest {
        turn: usize,
        name: String,
    },
    MissingMarker {
        turn: usize,
    },
    /// Distrust the last value and ask for it again.
    ValueRejection {
        turn: usize,
    },
    PostDiagnosisChatter,
    MissingCot,
}

pub const CHATTER: &str = "Let me know if you would like me to look at any other results.";
pub const NO_MARKER_TEXT: &str = "Let me think about which test would help most here.";

/// Chat endpoint that follows a decision tree and reads values back out of
/// the conversation, so it needs no state between calls.
pub struct MockLlm {
    tree: Arc<DecisionTree>,
    faults: Vec<MockFault>,
    calls: AtomicUsize,
}

struct Walk {
    at: NodeId,
    claims: Vec<String>,
    last_feature: Option<FeatureId>,
}

fn parse_value(feature: FeatureId, text: &str) -> Option<FeatureValue> {
    let text = text.trim();
    if text.eq_ignore_ascii_case("unavailable") {
        return Some(FeatureValue::Unavailable);
    }
    match feature.kind() {
        FeatureKind::Categorical => Some(FeatureValue::Categorical(text.to_lowercase())),
        _ => text.split_whitespace().next()?.parse().ok().map(FeatureValue::Numeric),
    }
}

/// `name: value` lines naming a known feature exactly.
fn read_values(text: &str, into: &mut HashMap<FeatureId, FeatureValue>) {
    let names = &AliasTable::builtin().features;
    for line in text.lines() {
        let Some((name, value)) = line.split_once(':') else { continue };
        let Some(f) = names.exact(name) else { continue };
        if let Some(v) = parse_value(f, value) {
            into.insert(f, v);
        }
    }
}

impl MockLlm {
    pub fn new(tree: Arc<DecisionTree>, faults: Vec<MockFault>) -> Self {
        MockLlm { tree, faults, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn has(&self, f: impl Fn(&MockFault) -> bool) -> bool {
        self.faults.iter().any(f)
    }

    fn walk(&self, known: &HashMap<FeatureId, FeatureValue>) -> Walk {
        let tree = &*self.tree;
        let flip: Vec<usize> = self
            .faults
            .iter()
            .filter_map(|f| match f {
                MockFault::ComparisonFlip { step } => Some(*step),
                _ => None,
            })
            .collect();
        let mut w = Walk { at: tree.root(), claims: Vec::new(), last_feature: None };
        let mut step = 0;
        while let Node::Test { feature, .. } = tree.node(w.at) {
            let Some(v) = known.get(feature) else { break };
            let truth = tree.select_branch(w.at, v);
            let mut taken = truth;
            if flip.contains(&step) && v.as_number().is_some() && tree.branches(w.at)[truth].condition.is_numeric() {
                if let Some(&n) = numeric_neighbours(tree, w.at, truth).last() {
                    taken = n;
                }
            }
            w.claims.push(claim_text(*feature, v, tree, w.at, taken));
            w.last_feature = Some(*feature);
            w.at = tree.branches(w.at)[taken].target;
            step += 1;
        }
        w
    }

    fn finish(&self, reasoning: &str, d: Diagnosis) -> String {
        let mut out = String::new();
        if !reasoning.is_empty() && !self.has(|f| *f == MockFault::MissingCot) {
            out.push_str(reasoning);
            out.push('\n');
        }
        out.push_str("DIAGNOSIS: ");
        out.push_str(d.display_name());
        if self.has(|f| *f == MockFault::PostDiagnosisChatter) {
            out.push('\n');
            out.push_str(CHATTER);
        }
        out
    }

    /// The assistant reply to a conversation.
    pub fn respond(&self, messages: &[ChatMessage]) -> String {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let turn = messages.iter().filter(|m| m.role == "assistant").count();
        let sequential = messages.first().is_some_and(|m| m.role == "system");
        let mut known = HashMap::new();
        for m in messages.iter().filter(|m| m.role == "user") {
            let text = match (sequential, m.content.split_once("Patient data:")) {
                (false, Some((_, data))) => data,
                _ => m.content.as_str(),
            };
            read_values(text, &mut known);
        }
        let w = self.walk(&known);

        for f in &self.faults {
            match f {
                MockFault::PrematureDiagnosis { turn: t, diagnosis } if *t == turn => return self.finish("", *diagnosis),
                MockFault::OffListRequest { turn: t, name } if *t == turn && sequential => {
                    return format!("REQUEST: {name}");
                }
                MockFault::MissingMarker { turn: t } if *t == turn => return NO_MARKER_TEXT.to_string(),
                MockFault::ValueRejection { turn: t } if *t == turn && sequential => {
                    if let Some(f) = w.last_feature {
                        let name = f.display_name();
                        return format!("The {name} value does not look plausible, so I cannot rely on it.\nREQUEST: {name}");
                    }
                }
                _ => {}
            }
        }

        let reasoning = if sequential {
            w.claims.last().cloned().unwrap_or_default()
        } else {
            w.claims.iter().filter(|c| !c.is_empty()).cloned().collect::<Vec<_>>().join("\n")
        };
        match self.tree.node(w.at) {
            Node::Leaf(d) => self.finish(&reasoning, *d),
            Node::Test { feature, .. } => {
                let marker = format!("REQUEST: {}", feature.display_name());
                if reasoning.is_empty() || self.has(|f| *f == MockFault::MissingCot) {
                    marker
                } else {
                    format!("{reasoning}\n{marker}")
                }
            }
        }
    }
}

impl ChatTransport for MockLlm {
    fn send(&self, request: &ChatRequest) -> Result<String, TransportError> {
        Ok(self.respond(&request.messages))
    }
}

/// Transport-level misbehaviour of a [`MockServer`].
#[derive(Debug, Clone, Default)]
pub struct ServerFaults {
    /// Status codes returned, in order, by the first calls.
    pub fail_with: Vec<u16>,
    /// The first `stall_calls` calls sleep this long before answering.
    pub stall: Duration,
    pub stall_calls: usize,
    /// Bearer token required on every call.
    pub token: Option<String>,
}

/// HTTP server speaking the chat-completion wire format on localhost.
pub struct MockServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    hits: Arc<AtomicUsize>,
    handle: Option<JoinHandle<()>>,
}

fn json_response(status: u16, body: String) -> tiny_http::Response<std::io::Cursor<Vec<u8>>> {
    let header = tiny_http::Header::from_bytes("Content-Type", "application/json").expect("static header");
    tiny_http::Response::from_string(body).with_status_code(status).with_header(header)
}

fn handle(mut req: tiny_http::Request, llm: &MockLlm, faults: &ServerFaults, call: usize) {
    if call < faults.stall_calls {
        std::thread::sleep(faults.stall);
    }
    let path = req.url().split('?').next().unwrap_or("").to_string();
    let authorized = match &faults.token {
        None => true,
        Some(t) => {
            let want = format!("Bearer {t}");
            req.headers().iter().any(|h| h.field.equiv("Authorization") && h.value.as_str() == want)
        }
    };
    let mut body = String::new();
    let read = req.as_reader().read_to_string(&mut body);
    let resp = if path != "/chat/completions" && path != "/v1/chat/completions" {
        json_response(404, r#"{"error":"not found"}"#.into())
    } else if !authorized {
        json_response(401, r#"{"error":"invalid token"}"#.into())
    } else if let Some(&status) = faults.fail_with.get(call) {
        json_response(status, format!(r#"{{"error":"injected {status}"}}"#))
    } else {
        match read.map_err(|e| e.to_string()).and_then(|_| serde_json::from_str::<ChatRequest>(&body).map_err(|e| e.to_string()))
        {
            Ok(chat) => {
                let reply = ChatResponse::single(llm.respond(&chat.messages));
                json_response(200, serde_json::to_string(&reply).expect("serializable"))
            }
            Err(e) => json_response(400, serde_json::json!({ "error": e }).to_string()),
        }
    };
    // The client may have given up already.
    let _ = req.respond(resp);
}

impl MockServer {
    pub fn start(llm: MockLlm, faults: ServerFaults) -> std::io::Result<Self> {
        let server = tiny_http::Server::http("127.0.0.1:0").map_err(std::io::Error::other)?;
        let addr = server.server_addr().to_ip().ok_or_else(|| std::io::Error::other("not an IP listener"))?;
        let stop = Arc::new(AtomicBool::new(false));
        let hits = Arc::new(AtomicUsize::new(0));
        let llm = Arc::new(llm);
        let faults = Arc::new(faults);
        let (stop2, hits2) = (stop.clone(), hits.clone());
        let handle = std::thread::spawn(move || {
            while !stop2.load(Ordering::SeqCst) {
                match server.recv_timeout(Duration::from_millis(20)) {
                    Ok(Some(req)) => {
                        let call = hits2.fetch_add(1, Ordering::SeqCst);
                        let (llm, faults) = (llm.clone(), faults.clone());
                        std::thread::spawn(move || handle(req, &llm, &faults, call));
                    }
                    Ok(None) => {}
                    Err(_) => break,
                }
            }
        });
        Ok(MockServer { addr, stop, hits, handle: Some(handle) })
    }

    /// Base URL to put in an endpoint config.
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    /// Requests received so far, including failed ones.
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
