//! JSON ingestion format for persona graphs.
//!
//! ```json
//! { "persona_id": "p1",
//!   "nodes": [{"id": "f1", "kind": "F", "label": "...",
//!              "entity_spans": [{"start": 0, "end": 3, "role": "AGENT", "text": "..."}],
//!              "quotes": ["..."]}],
//!   "edges": [{"src": "f1", "dst": "s1", "kind": "FS", "label": "AGENT"}] }
//! ```
//!
//! Saving sorts nodes by id and edges by `(src, dst, kind, label)` so that
//! equal graphs always produce identical bytes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::validate::{Rule, ValidationReport, Violation};
use super::{
    canonicalize_edges, validate, Edge, EdgeKind, EntitySpan, GenericSlot, Node, NodeId, NodeKind,
    PersonaGraph, PersonaId, Provenance,
};

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("document is not valid UTF-8: {0}")]
    Utf8(#[from] std::str::Utf8Error),
    #[error("malformed document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid graph: {0}")]
    Validation(ValidationReport),
}

impl LoadError {
    pub fn report(&self) -> Option<&ValidationReport> {
        match self {
            LoadError::Validation(r) => Some(r),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub(crate) struct NodeDoc {
    pub id: String,
    pub kind: String,
    pub label: String,
    #[serde(default)]
    pub entity_spans: Vec<EntitySpan>,
    #[serde(default)]
    pub quotes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub slots: Vec<GenericSlot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Vec<PersonaId>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub(crate) struct EdgeDoc {
    pub src: String,
    pub dst: String,
    pub kind: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Vec<PersonaId>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PersonaDoc {
    persona_id: PersonaId,
    nodes: Vec<NodeDoc>,
    #[serde(default)]
    edges: Vec<EdgeDoc>,
}

impl NodeDoc {
    pub(crate) fn from_node(node: &Node, with_provenance: bool) -> Self {
        NodeDoc {
            id: node.id.0.clone(),
            kind: node.kind.code().to_string(),
            label: node.label.clone(),
            entity_spans: node.entity_spans.clone(),
            quotes: node.quotes.clone(),
            slots: node.slots.clone(),
            provenance: with_provenance.then(|| node.provenance.iter().cloned().collect()),
        }
    }

    /// Converts to a node; provenance falls back to `default` when absent.
    pub(crate) fn into_node(self, default: &Provenance) -> Result<Node, Violation> {
        let kind = NodeKind::from_code(&self.kind).ok_or_else(|| {
            Violation::new(Rule::UnknownNodeKind, &self.id, format!("unknown node kind {:?}", self.kind))
        })?;
        Ok(Node {
            id: NodeId(self.id),
            kind,
            label: self.label,
            entity_spans: self.entity_spans,
            quotes: self.quotes,
            provenance: self.provenance.map(|p| p.into_iter().collect()).unwrap_or_else(|| default.clone()),
            slots: self.slots,
        })
    }
}

impl EdgeDoc {
    pub(crate) fn from_edge(edge: &Edge, with_provenance: bool) -> Self {
        EdgeDoc {
            src: edge.src.0.clone(),
            dst: edge.dst.0.clone(),
            kind: edge.kind.code().to_string(),
            label: edge.label.clone(),
            provenance: with_provenance.then(|| edge.provenance.iter().cloned().collect()),
        }
    }

    pub(crate) fn into_edge(self, default: &Provenance) -> Result<Edge, Violation> {
        let kind = EdgeKind::from_code(&self.kind).ok_or_else(|| {
            Violation::new(
                Rule::ForbiddenEdgeKind,
                format!("{}-[{}/{}]->{}", self.src, self.kind, self.label, self.dst),
                format!("forbidden edge kind {}", self.kind),
            )
        })?;
        Ok(Edge {
            src: NodeId(self.src),
            dst: NodeId(self.dst),
            kind,
            label: self.label,
            provenance: self.provenance.map(|p| p.into_iter().collect()).unwrap_or_else(|| default.clone()),
        })
    }
}

/// Collects documents into an id-keyed map. Exact duplicate records collapse;
/// conflicting records under one id are violations.
pub(crate) fn collect_nodes(
    docs: Vec<NodeDoc>,
    default: &Provenance,
    report: &mut ValidationReport,
) -> BTreeMap<NodeId, Node> {
    let mut nodes: BTreeMap<NodeId, Node> = BTreeMap::new();
    for doc in docs {
        match doc.into_node(default) {
            Ok(node) => match nodes.get(&node.id) {
                Some(existing) if *existing == node => {}
                Some(_) => report.push(Violation::new(
                    Rule::DuplicateNodeId,
                    node.id.as_str(),
                    "duplicate node id with conflicting content",
                )),
                None => {
                    nodes.insert(node.id.clone(), node);
                }
            },
            Err(v) => report.push(v),
        }
    }
    nodes
}

/// Parses and validates a persona-graph document.
pub fn load_persona(document: &[u8]) -> Result<PersonaGraph, LoadError> {
    let text = std::str::from_utf8(document)?;
    let doc: PersonaDoc = serde_json::from_str(text)?;
    let default = Provenance::from([doc.persona_id.clone()]);
    let mut report = ValidationReport::default();
    let nodes = collect_nodes(doc.nodes, &default, &mut report);
    let mut edges = Vec::with_capacity(doc.edges.len());
    for e in doc.edges {
        match e.into_edge(&default) {
            Ok(edge) => edges.push(edge),
            Err(v) => report.push(v),
        }
    }
    canonicalize_edges(&mut edges);
    let graph = PersonaGraph { persona_id: doc.persona_id, nodes, edges };
    report.violations.extend(validate(&graph).violations);
    if report.is_valid() {
        Ok(graph)
    } else {
        Err(LoadError::Validation(report))
    }
}

/// Canonical serialization: pretty JSON, nodes by id, edges by sort key, trailing newline.
pub fn save_persona(graph: &PersonaGraph) -> Vec<u8> {
    let mut edges = graph.edges.clone();
    canonicalize_edges(&mut edges);
    let doc = PersonaDoc {
        persona_id: graph.persona_id.clone(),
        nodes: graph.nodes.values().map(|n| NodeDoc::from_node(n, false)).collect(),
        edges: edges.iter().map(|e| EdgeDoc::from_edge(e, false)).collect(),
    };
    to_canonical_json(&doc)
}

pub(crate) fn to_canonical_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("graph documents always serialize");
    out.push(b'\n');
    out
}
