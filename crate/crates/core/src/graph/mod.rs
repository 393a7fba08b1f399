//! Persona-graph domain types.
//!
//! A persona graph has three node kinds (subject, factual, interpretive) and a
//! closed edge grammar: only F→S, F→F, F→I and I→F edges exist, each with its
//! own label vocabulary. F→S labels are participant roles from [`Role`].

pub(crate) mod format;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use format::{load_persona, save_persona, LoadError};
pub(crate) use format::{EdgeDoc, NodeDoc};
pub use validate::{validate, Rule, ValidationReport, Violation};

/// Opaque node identifier. The pipeline never derives meaning from it.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_owned())
    }
}

/// Identifier of a source persona.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PersonaId(pub String);

impl PersonaId {
    pub fn new(id: impl Into<String>) -> Self {
        PersonaId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PersonaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PersonaId {
    fn from(s: &str) -> Self {
        PersonaId(s.to_owned())
    }
}

/// Set of source personas that contributed a node or edge.
pub type Provenance = BTreeSet<PersonaId>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    #[serde(rename = "S")]
    Subject,
    #[serde(rename = "F")]
    Factual,
    #[serde(rename = "I")]
    Interpretive,
}

impl NodeKind {
    pub const ALL: [NodeKind; 3] = [NodeKind::Subject, NodeKind::Factual, NodeKind::Interpretive];

    pub fn code(self) -> char {
        match self {
            NodeKind::Subject => 'S',
            NodeKind::Factual => 'F',
            NodeKind::Interpretive => 'I',
        }
    }

    pub fn from_code(c: &str) -> Option<Self> {
        match c {
            "S" => Some(NodeKind::Subject),
            "F" => Some(NodeKind::Factual),
            "I" => Some(NodeKind::Interpretive),
            _ => None,
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// Participant roles allowed on F→S edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Role {
    Agent,
    Patient,
    Location,
    Organization,
    Discipline,
    Instrument,
    Recipient,
    Time,
}

impl Role {
    pub const ALL: [Role; 8] = [
        Role::Agent,
        Role::Patient,
        Role::Location,
        Role::Organization,
        Role::Discipline,
        Role::Instrument,
        Role::Recipient,
        Role::Time,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Agent => "AGENT",
            Role::Patient => "PATIENT",
            Role::Location => "LOCATION",
            Role::Organization => "ORGANIZATION",
            Role::Discipline => "DISCIPLINE",
            Role::Instrument => "INSTRUMENT",
            Role::Recipient => "RECIPIENT",
            Role::Time => "TIME",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown role {0:?}")]
pub struct UnknownRole(pub String);

impl FromStr for Role {
    type Err = UnknownRole;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| UnknownRole(s.to_owned()))
    }
}

/// The four permitted edge kinds. S→F, I→S, I→I and the rest have no variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeKind {
    FS,
    FF,
    FI,
    IF,
}

pub const FF_LABELS: [&str; 3] = ["precedes", "enables", "causes"];
pub const FI_LABELS: [&str; 3] = ["yields", "evokes", "supports"];
pub const IF_LABELS: [&str; 2] = ["guides", "constrains"];

impl EdgeKind {
    pub const ALL: [EdgeKind; 4] = [EdgeKind::FS, EdgeKind::FF, EdgeKind::FI, EdgeKind::IF];

    pub fn endpoints(self) -> (NodeKind, NodeKind) {
        use NodeKind::*;
        match self {
            EdgeKind::FS => (Factual, Subject),
            EdgeKind::FF => (Factual, Factual),
            EdgeKind::FI => (Factual, Interpretive),
            EdgeKind::IF => (Interpretive, Factual),
        }
    }

    /// The edge kind for a (source, target) kind pair, if the grammar allows one.
    pub fn between(src: NodeKind, dst: NodeKind) -> Option<Self> {
        EdgeKind::ALL.into_iter().find(|k| k.endpoints() == (src, dst))
    }

    pub fn code(self) -> &'static str {
        match self {
            EdgeKind::FS => "FS",
            EdgeKind::FF => "FF",
            EdgeKind::FI => "FI",
            EdgeKind::IF => "IF",
        }
    }

    pub fn from_code(s: &str) -> Option<Self> {
        EdgeKind::ALL.into_iter().find(|k| k.code() == s)
    }

    pub fn allows_label(self, label: &str) -> bool {
        match self {
            EdgeKind::FS => label.parse::<Role>().is_ok(),
            EdgeKind::FF => FF_LABELS.contains(&label),
            EdgeKind::FI => FI_LABELS.contains(&label),
            EdgeKind::IF => IF_LABELS.contains(&label),
        }
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// An annotated entity mention inside an F-node label. Offsets count Unicode
/// scalar values, `end` exclusive.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub role: String,
    pub text: String,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, role: impl Into<String>, text: impl Into<String>) -> Self {
        EntitySpan { start, end, role: role.into(), text: text.into() }
    }

    /// Builds a span by locating `text` in `label` (first occurrence at or after `from`).
    pub fn locate(label: &str, text: &str, role: Role, from: usize) -> Option<Self> {
        let chars: Vec<char> = label.chars().collect();
        let needle: Vec<char> = text.chars().collect();
        if needle.is_empty() || needle.len() > chars.len() {
            return None;
        }
        (from..=chars.len() - needle.len())
            .find(|&i| chars[i..i + needle.len()] == needle[..])
            .map(|i| EntitySpan::new(i, i + needle.len(), role.as_str(), text))
    }
}

/// Where an extracted entity used to sit in a genericized label. Offsets index
/// the generic label (Unicode scalar values) and cover the generic token.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GenericSlot {
    pub role: Role,
    pub start: usize,
    pub end: usize,
    pub entity: NodeId,
    /// Original surface text, kept only when it differs from the entity node's label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub label: String,
    pub entity_spans: Vec<EntitySpan>,
    pub quotes: Vec<String>,
    pub provenance: Provenance,
    pub slots: Vec<GenericSlot>,
}

impl Node {
    pub fn new(id: impl Into<NodeId>, kind: NodeKind, label: impl Into<String>) -> Self {
        Node {
            id: id.into(),
            kind,
            label: label.into(),
            entity_spans: Vec::new(),
            quotes: Vec::new(),
            provenance: Provenance::new(),
            slots: Vec::new(),
        }
    }

    pub fn with_span(mut self, span: EntitySpan) -> Self {
        self.entity_spans.push(span);
        self
    }

    pub fn with_quote(mut self, quote: impl Into<String>) -> Self {
        self.quotes.push(quote.into());
        self
    }

    pub fn canonical_label(&self) -> String {
        canonical_label(&self.label)
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
    pub label: String,
    pub provenance: Provenance,
}

impl Edge {
    pub fn new(
        src: impl Into<NodeId>,
        dst: impl Into<NodeId>,
        kind: EdgeKind,
        label: impl Into<String>,
    ) -> Self {
        Edge {
            src: src.into(),
            dst: dst.into(),
            kind,
            label: label.into(),
            provenance: Provenance::new(),
        }
    }

    pub fn role(src: impl Into<NodeId>, dst: impl Into<NodeId>, role: Role) -> Self {
        Edge::new(src, dst, EdgeKind::FS, role.as_str())
    }

    pub fn sort_key(&self) -> (&NodeId, &NodeId, EdgeKind, &str) {
        (&self.src, &self.dst, self.kind, &self.label)
    }

    pub fn describe(&self) -> String {
        format!("{}-[{}/{}]->{}", self.src, self.kind, self.label, self.dst)
    }
}

/// Sorts edges by `(src, dst, kind, label)` and folds duplicates, unioning provenance.
pub fn canonicalize_edges(edges: &mut Vec<Edge>) {
    edges.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    let mut out: Vec<Edge> = Vec::with_capacity(edges.len());
    for e in edges.drain(..) {
        match out.last_mut() {
            Some(last) if last.sort_key() == e.sort_key() => {
                last.provenance.extend(e.provenance);
            }
            _ => out.push(e),
        }
    }
    *edges = out;
}

/// Label form used for equality: trimmed, internal whitespace collapsed, lower-cased.
pub fn canonical_label(label: &str) -> String {
    label.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Slice of `s` between two Unicode scalar offsets.
pub fn char_slice(s: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut indices = s.char_indices().map(|(i, _)| i).chain(std::iter::once(s.len()));
    let begin = indices.nth(start)?;
    let finish = if end == start { begin } else { indices.nth(end - start - 1)? };
    Some(&s[begin..finish])
}

/// Read-only access shared by persona graphs, unigraphs and sampled graphs.
pub trait GraphView {
    fn nodes(&self) -> &BTreeMap<NodeId, Node>;
    fn edges(&self) -> &[Edge];
    fn provenance_scope(&self) -> ProvenanceScope<'_>;

    fn node(&self, id: &NodeId) -> Option<&Node> {
        self.nodes().get(id)
    }

    fn node_count(&self) -> usize {
        self.nodes().len()
    }
}

/// What node and edge provenance must look like for a graph to be valid.
#[derive(Debug, Clone, Copy)]
pub enum ProvenanceScope<'a> {
    /// Exactly this persona, as in a single persona graph.
    Single(&'a PersonaId),
    /// Any non-empty subset of these personas.
    Within(&'a BTreeSet<PersonaId>),
    /// Any non-empty set.
    Unrestricted,
}

/// One source individual's graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PersonaGraph {
    pub persona_id: PersonaId,
    pub nodes: BTreeMap<NodeId, Node>,
    pub edges: Vec<Edge>,
}

impl PersonaGraph {
    pub fn new(persona_id: impl Into<PersonaId>) -> Self {
        PersonaGraph { persona_id: persona_id.into(), nodes: BTreeMap::new(), edges: Vec::new() }
    }

    /// Inserts a node, stamping it with this persona's provenance.
    pub fn add_node(&mut self, mut node: Node) -> &mut Self {
        node.provenance = Provenance::from([self.persona_id.clone()]);
        self.nodes.insert(node.id.clone(), node);
        self
    }

    pub fn add_edge(&mut self, mut edge: Edge) -> &mut Self {
        edge.provenance = Provenance::from([self.persona_id.clone()]);
        self.edges.push(edge);
        self
    }

    pub fn canonicalize(&mut self) {
        canonicalize_edges(&mut self.edges);
    }

    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }
}

impl From<String> for PersonaId {
    fn from(s: String) -> Self {
        PersonaId(s)
    }
}

impl GraphView for PersonaGraph {
    fn nodes(&self) -> &BTreeMap<NodeId, Node> {
        &self.nodes
    }

    fn edges(&self) -> &[Edge] {
        &self.edges
    }

    fn provenance_scope(&self) -> ProvenanceScope<'_> {
        ProvenanceScope::Single(&self.persona_id)
    }
}

/// Undirected adjacency (sorted, deduplicated neighbor ids) over a graph's edges.
pub fn undirected_adjacency(g: &impl GraphView) -> BTreeMap<NodeId, Vec<NodeId>> {
    let mut adj: BTreeMap<NodeId, BTreeSet<NodeId>> =
        g.nodes().keys().map(|id| (id.clone(), BTreeSet::new())).collect();
    for e in g.edges() {
        if e.src == e.dst {
            continue;
        }
        if let Some(set) = adj.get_mut(&e.src) {
            set.insert(e.dst.clone());
        }
        if let Some(set) = adj.get_mut(&e.dst) {
            set.insert(e.src.clone());
        }
    }
    adj.into_iter().map(|(k, v)| (k, v.into_iter().collect())).collect()
}
