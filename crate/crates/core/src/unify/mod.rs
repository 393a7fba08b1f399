//! Merging persona graphs into the unigraph.
//!
//! Nodes of the same kind whose labels are equivalent (closed transitively)
//! collapse into one node carrying the union of their provenance. Edges follow
//! their endpoints and parallel edges fold together. An optional
//! differentially private set union ([`dp_prune`]) first decides which node
//! keys may appear at all.

mod dp;
mod equivalence;
mod union_find;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::graph::format::to_canonical_json;
use crate::graph::{
    canonical_label, canonicalize_edges, validate, Edge, EdgeDoc, EdgeKind, GraphView, LoadError, Node,
    NodeDoc, NodeId, NodeKind, PersonaGraph, PersonaId, Provenance, ProvenanceScope, ValidationReport,
};
use crate::hash::stable_hex;

pub use dp::{dp_prune, laplace_unit, DpParams};
pub use equivalence::{EmbeddingThreshold, EquivalenceProvider, ExactCanonical, InvalidThreshold};
use union_find::DisjointSet;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MergeError {
    #[error("no input graphs")]
    NoInputs,
    #[error("duplicate persona id {0}")]
    DuplicatePersona(PersonaId),
    #[error("invalid DP parameters: {0}")]
    InvalidParams(String),
}

/// Differential-privacy settings a unigraph was built with.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DpMeta {
    pub applied: bool,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub max_contribution: Option<usize>,
    /// Node keys with positive contributed weight.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_keys: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub released_keys: Option<usize>,
}

/// The merged multi-persona graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Unigraph {
    pub nodes: BTreeMap<NodeId, Node>,
    pub edges: Vec<Edge>,
    pub sources: BTreeSet<PersonaId>,
    pub dp_meta: DpMeta,
    /// `precedes` edges dropped because merging would have closed a cycle.
    pub dropped_precedes: usize,
}

impl GraphView for Unigraph {
    fn nodes(&self) -> &BTreeMap<NodeId, Node> {
        &self.nodes
    }

    fn edges(&self) -> &[Edge] {
        &self.edges
    }

    fn provenance_scope(&self) -> ProvenanceScope<'_> {
        ProvenanceScope::Within(&self.sources)
    }
}

impl Unigraph {
    pub fn source_count(&self) -> usize {
        self.sources.len()
    }

    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }

    /// Node and edge structure without DP bookkeeping, for structural comparison.
    pub fn structure(&self) -> (&BTreeMap<NodeId, Node>, &[Edge], &BTreeSet<PersonaId>) {
        (&self.nodes, &self.edges, &self.sources)
    }

    /// Number of nodes unique to each source (provenance is exactly that source).
    pub fn unique_counts(&self) -> BTreeMap<PersonaId, usize> {
        let mut counts: BTreeMap<PersonaId, usize> = self.sources.iter().map(|p| (p.clone(), 0)).collect();
        for n in self.nodes.values() {
            if n.provenance.len() == 1 {
                if let Some(c) = counts.get_mut(n.provenance.first().expect("len 1")) {
                    *c += 1;
                }
            }
        }
        counts
    }
}

/// Id of the merged node for a cluster key.
pub fn merged_node_id(kind: NodeKind, key: &str) -> NodeId {
    NodeId(format!("{}-{}", kind.code(), stable_hex(&[&kind.code().to_string(), key], 16)))
}

/// (kind, canonical cluster key) identifying a merged node.
pub(crate) type NodeKey = (NodeKind, String);

/// Label clustering shared by plain and DP merging.
pub(crate) struct Clustering<'g> {
    /// Graphs sorted by persona id.
    pub graphs: Vec<&'g PersonaGraph>,
    /// Cluster key per (graph index, node id).
    pub key_of: BTreeMap<(usize, NodeId), NodeKey>,
}

pub(crate) fn cluster<'g>(
    graphs: &'g [PersonaGraph],
    eq: &dyn EquivalenceProvider,
) -> Result<Clustering<'g>, MergeError> {
    if graphs.is_empty() {
        return Err(MergeError::NoInputs);
    }
    let mut sorted: Vec<&PersonaGraph> = graphs.iter().collect();
    sorted.sort_by(|a, b| a.persona_id.cmp(&b.persona_id));
    for pair in sorted.windows(2) {
        if pair[0].persona_id == pair[1].persona_id {
            return Err(MergeError::DuplicatePersona(pair[0].persona_id.clone()));
        }
    }

    let mut key_of = BTreeMap::new();
    for kind in NodeKind::ALL {
        // Distinct canonical labels of this kind, with one surface form each for the provider.
        let mut labels: BTreeMap<String, &str> = BTreeMap::new();
        for g in &sorted {
            for n in g.nodes.values().filter(|n| n.kind == kind) {
                labels.entry(n.canonical_label()).or_insert(n.label.as_str());
            }
        }
        let canon: Vec<&String> = labels.keys().collect();
        let mut ds = DisjointSet::new(canon.len());
        if !eq.canonical_only() {
            let surface: Vec<&str> = labels.values().copied().collect();
            for i in 0..canon.len() {
                for j in i + 1..canon.len() {
                    if eq.equivalent(surface[i], surface[j], kind) {
                        ds.union(i, j);
                    }
                }
            }
        }
        // Cluster key: lexicographically smallest canonical label in the cluster.
        let mut root_key: BTreeMap<usize, &String> = BTreeMap::new();
        for (i, c) in canon.iter().enumerate() {
            root_key.entry(ds.find(i)).or_insert(c);
        }
        let index: BTreeMap<&String, usize> = canon.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        for (gi, g) in sorted.iter().enumerate() {
            for n in g.nodes.values().filter(|n| n.kind == kind) {
                let c = n.canonical_label();
                let root = ds.find(index[&c]);
                key_of.insert((gi, n.id.clone()), (kind, root_key[&root].clone()));
            }
        }
    }
    Ok(Clustering { graphs: sorted, key_of })
}

/// Builds the unigraph from a clustering, keeping only keys accepted by `keep`.
pub(crate) fn assemble(
    clustering: &Clustering<'_>,
    keep: impl Fn(&NodeKey) -> bool,
    keep_quotes: bool,
) -> Unigraph {
    // Constituents per key, in (persona id, node id) order.
    let mut members: BTreeMap<&NodeKey, Vec<(usize, &Node)>> = BTreeMap::new();
    for (gi, g) in clustering.graphs.iter().enumerate() {
        for n in g.nodes.values() {
            let key = &clustering.key_of[&(gi, n.id.clone())];
            if keep(key) {
                members.entry(key).or_default().push((gi, n));
            }
        }
    }

    let id_of = |gi: usize, id: &NodeId| -> Option<NodeId> {
        let key = clustering.key_of.get(&(gi, id.clone()))?;
        keep(key).then(|| merged_node_id(key.0, &key.1))
    };

    let mut nodes = BTreeMap::new();
    for (key, list) in &members {
        let id = merged_node_id(key.0, &key.1);
        let (rep_gi, rep) = list
            .iter()
            .find(|(_, n)| canonical_label(&n.label) == key.1)
            .copied()
            .unwrap_or(list[0]);
        let mut provenance = Provenance::new();
        let mut quotes: Vec<String> = Vec::new();
        for (_, n) in list {
            provenance.extend(n.provenance.iter().cloned());
            if keep_quotes {
                for q in &n.quotes {
                    if !quotes.contains(q) {
                        quotes.push(q.clone());
                    }
                }
            }
        }
        let slots = rep
            .slots
            .iter()
            .filter_map(|s| {
                let mut s = s.clone();
                s.entity = id_of(rep_gi, &s.entity)?;
                Some(s)
            })
            .collect();
        nodes.insert(
            id.clone(),
            Node {
                id,
                kind: key.0,
                label: rep.label.clone(),
                entity_spans: rep.entity_spans.clone(),
                quotes,
                provenance,
                slots,
            },
        );
    }

    let mut edges = Vec::new();
    for (gi, g) in clustering.graphs.iter().enumerate() {
        for e in &g.edges {
            let (Some(src), Some(dst)) = (id_of(gi, &e.src), id_of(gi, &e.dst)) else {
                continue;
            };
            edges.push(Edge { src, dst, kind: e.kind, label: e.label.clone(), provenance: e.provenance.clone() });
        }
    }
    canonicalize_edges(&mut edges);
    let (edges, dropped_precedes) = break_precedes_cycles(edges);

    Unigraph {
        nodes,
        edges,
        sources: clustering.graphs.iter().map(|g| g.persona_id.clone()).collect(),
        dp_meta: DpMeta::default(),
        dropped_precedes,
    }
}

/// Drops self-loops, and any `precedes` edge that would close a chronology
/// cycle, scanning edges in canonical order.
fn break_precedes_cycles(edges: Vec<Edge>) -> (Vec<Edge>, usize) {
    let mut succ: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    let mut kept = Vec::with_capacity(edges.len());
    let mut dropped = 0;
    for e in edges {
        if e.src == e.dst {
            dropped += 1;
            continue;
        }
        if e.kind == EdgeKind::FF && e.label == "precedes" {
            if reaches(&succ, &e.dst, &e.src) {
                dropped += 1;
                continue;
            }
            succ.entry(e.src.clone()).or_default().insert(e.dst.clone());
        }
        kept.push(e);
    }
    (kept, dropped)
}

fn reaches(succ: &BTreeMap<NodeId, BTreeSet<NodeId>>, from: &NodeId, to: &NodeId) -> bool {
    let mut stack = vec![from];
    let mut seen = BTreeSet::new();
    while let Some(n) = stack.pop() {
        if n == to {
            return true;
        }
        if seen.insert(n) {
            if let Some(next) = succ.get(n) {
                stack.extend(next.iter());
            }
        }
    }
    false
}

/// Merges persona graphs by label equivalence.
pub fn merge(graphs: &[PersonaGraph], eq: &dyn EquivalenceProvider) -> Result<Unigraph, MergeError> {
    let clustering = cluster(graphs, eq)?;
    Ok(assemble(&clustering, |_| true, true))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct KindStats {
    pub total: usize,
    pub merged: usize,
    pub merge_rate: f64,
}

impl KindStats {
    fn new(total: usize, merged: usize) -> Self {
        let merge_rate = if total == 0 { 0.0 } else { merged as f64 / total as f64 };
        KindStats { total, merged, merge_rate }
    }

    /// Merge rate rounded to 0.1 percentage points, as a fraction.
    pub fn rounded_rate(&self) -> f64 {
        (self.merge_rate * 1000.0).round() / 1000.0
    }

    pub fn percent(&self) -> String {
        format!("{:.1}%", self.merge_rate * 100.0)
    }
}

/// Node totals and merge rates per kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MergeStats {
    pub subject: KindStats,
    pub factual: KindStats,
    pub interpretive: KindStats,
    pub overall: KindStats,
}

impl MergeStats {
    pub fn kind(&self, kind: NodeKind) -> &KindStats {
        match kind {
            NodeKind::Subject => &self.subject,
            NodeKind::Factual => &self.factual,
            NodeKind::Interpretive => &self.interpretive,
        }
    }
}

impl fmt::Display for MergeStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Total nodes: {} (S:{}, F:{}, I:{}); S merge rate: {}; F merge rate: {}; I merge rate: {}",
            self.overall.total,
            self.subject.total,
            self.factual.total,
            self.interpretive.total,
            self.subject.percent(),
            self.factual.percent(),
            self.interpretive.percent()
        )
    }
}

pub fn merge_stats(u: &Unigraph) -> MergeStats {
    let mut counts: BTreeMap<NodeKind, (usize, usize)> = BTreeMap::new();
    for n in u.nodes.values() {
        let c = counts.entry(n.kind).or_default();
        c.0 += 1;
        if n.provenance.len() > 1 {
            c.1 += 1;
        }
    }
    let get = |k| {
        let (t, m) = counts.get(&k).copied().unwrap_or_default();
        KindStats::new(t, m)
    };
    let (s, f, i) = (get(NodeKind::Subject), get(NodeKind::Factual), get(NodeKind::Interpretive));
    MergeStats {
        subject: s,
        factual: f,
        interpretive: i,
        overall: KindStats::new(s.total + f.total + i.total, s.merged + f.merged + i.merged),
    }
}

#[derive(Serialize, Deserialize)]
struct UnigraphDoc {
    source_count: usize,
    sources: Vec<PersonaId>,
    dp_meta: DpMeta,
    #[serde(default)]
    dropped_precedes: usize,
    nodes: Vec<NodeDoc>,
    edges: Vec<EdgeDoc>,
}

/// Canonical unigraph serialization.
pub fn save_unigraph(u: &Unigraph) -> Vec<u8> {
    let mut edges = u.edges.clone();
    canonicalize_edges(&mut edges);
    let doc = UnigraphDoc {
        source_count: u.source_count(),
        sources: u.sources.iter().cloned().collect(),
        dp_meta: u.dp_meta.clone(),
        dropped_precedes: u.dropped_precedes,
        nodes: u.nodes.values().map(|n| NodeDoc::from_node(n, true)).collect(),
        edges: edges.iter().map(|e| EdgeDoc::from_edge(e, true)).collect(),
    };
    to_canonical_json(&doc)
}

pub fn load_unigraph(bytes: &[u8]) -> Result<Unigraph, LoadError> {
    let text = std::str::from_utf8(bytes)?;
    let doc: UnigraphDoc = serde_json::from_str(text)?;
    let mut report = ValidationReport::default();
    let empty = Provenance::new();
    let nodes = crate::graph::format::collect_nodes(doc.nodes, &empty, &mut report);
    let mut edges = Vec::new();
    for e in doc.edges {
        match e.into_edge(&empty) {
            Ok(edge) => edges.push(edge),
            Err(v) => report.push(v),
        }
    }
    canonicalize_edges(&mut edges);
    let u = Unigraph {
        nodes,
        edges,
        sources: doc.sources.into_iter().collect(),
        dp_meta: doc.dp_meta,
        dropped_precedes: doc.dropped_precedes,
    };
    if u.source_count() != doc.source_count {
        report.push(crate::graph::Violation::new(
            crate::graph::Rule::ProvenanceMismatch,
            "sources",
            "source_count disagrees with the source list",
        ));
    }
    report.violations.extend(validate(&u).violations);
    if report.is_valid() {
        Ok(u)
    } else {
        Err(LoadError::Validation(report))
    }
}
