//! Thematic random walks over the unigraph.
//!
//! A walk starts at an interpretive "theme anchor". At each step it jumps back
//! to the anchor with probability `alpha`; otherwise it moves to a neighbor
//! (edges taken in either direction) picked with probability proportional to
//! `exp(lambda * cos(neighbor, anchor))`. With `lambda = 0` this is a plain
//! random walk with restart; large `lambda` keeps the walk on-theme.

mod msc;
mod narrative;
mod time;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::{cosine, Embedder};
use crate::graph::format::to_canonical_json;
use crate::graph::{
    undirected_adjacency, validate, Edge, EdgeDoc, EdgeKind, GraphView, LoadError, Node, NodeDoc, NodeId,
    NodeKind, Provenance, ProvenanceScope, Role, ValidationReport,
};
use crate::hash::{derive_seed, stable_hex};
use crate::unify::Unigraph;

pub use msc::{bank_msc, msc, MscEntry, MscError, MscReport, DEFAULT_MSC_THRESHOLD};
pub use narrative::render_narrative;
pub use time::shift_time_tokens;

pub const DEFAULT_ALPHA: f64 = 0.15;
pub const DEFAULT_BUDGET: usize = 40;

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_budget() -> usize {
    DEFAULT_BUDGET
}

fn default_lambda() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkParams {
    pub anchor: NodeId,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Step limit; `None` means ten times the node budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    #[serde(default = "default_budget")]
    pub node_budget: usize,
    #[serde(default)]
    pub time_jitter: u32,
    #[serde(default, alias = "rng_seed")]
    pub seed: u64,
}

impl WalkParams {
    pub fn new(anchor: impl Into<NodeId>) -> Self {
        WalkParams {
            anchor: anchor.into(),
            lambda: default_lambda(),
            alpha: DEFAULT_ALPHA,
            max_steps: None,
            node_budget: DEFAULT_BUDGET,
            time_jitter: 0,
            seed: 0,
        }
    }

    pub fn steps(&self) -> usize {
        self.max_steps.unwrap_or(10 * self.node_budget)
    }

    pub fn check(&self) -> Result<(), WalkError> {
        let bad = |m: String| Err(WalkError::InvalidParams(m));
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if self.node_budget == 0 {
            return bad("node_budget must be >= 1".into());
        }
        if self.steps() == 0 {
            return bad("max_steps must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WalkError {
    #[error("anchor {0} not found")]
    AnchorNotFound(NodeId),
    #[error("anchor {0} is not an interpretive node")]
    AnchorNotInterpretive(NodeId),
    #[error("zero-degree anchor {0}: cannot walk")]
    ZeroDegreeAnchor(NodeId),
    #[error("invalid walk parameters: {0}")]
    InvalidParams(String),
    #[error("unigraph has no interpretive node with neighbors to anchor on")]
    NoAnchorCandidates,
}

/// One transition of a [`Walker`], as node indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub from: usize,
    pub to: usize,
    pub teleported: bool,
}

/// Step-level walk state over a graph. Node indices follow id order.
pub struct Walker {
    ids: Vec<NodeId>,
    neighbors: Vec<Vec<usize>>,
    choosers: Vec<Option<WeightedIndex<f64>>>,
    similarity: Vec<f64>,
    anchor: usize,
    alpha: f64,
    current: usize,
}

impl Walker {
    pub fn new(
        g: &impl GraphView,
        anchor: &NodeId,
        lambda: f64,
        alpha: f64,
        embed: &dyn Embedder,
    ) -> Result<Self, WalkError> {
        let anchor_node = g.node(anchor).ok_or_else(|| WalkError::AnchorNotFound(anchor.clone()))?;
        if anchor_node.kind != NodeKind::Interpretive {
            return Err(WalkError::AnchorNotInterpretive(anchor.clone()));
        }
        let adj = undirected_adjacency(g);
        if adj[anchor].is_empty() {
            return Err(WalkError::ZeroDegreeAnchor(anchor.clone()));
        }
        let ids: Vec<NodeId> = adj.keys().cloned().collect();
        let index: BTreeMap<&NodeId, usize> = ids.iter().enumerate().map(|(i, id)| (id, i)).collect();
        let theme = embed.embed(&anchor_node.label);
        let similarity: Vec<f64> =
            ids.iter().map(|id| cosine(&embed.embed(&g.nodes()[id].label), &theme)).collect();
        let neighbors: Vec<Vec<usize>> =
            adj.values().map(|nbrs| nbrs.iter().map(|n| index[n]).collect()).collect();
        let choosers = neighbors
            .iter()
            .map(|nbrs| {
                if nbrs.is_empty() {
                    return None;
                }
                let top = nbrs.iter().map(|&n| similarity[n]).fold(f64::NEG_INFINITY, f64::max);
                let weights: Vec<f64> = nbrs.iter().map(|&n| (lambda * (similarity[n] - top)).exp()).collect();
                WeightedIndex::new(weights).ok()
            })
            .collect();
        let anchor = index[anchor];
        Ok(Walker { ids, neighbors, choosers, similarity, anchor, alpha, current: anchor })
    }

    pub fn id(&self, index: usize) -> &NodeId {
        &self.ids[index]
    }

    pub fn index_of(&self, id: &NodeId) -> Option<usize> {
        self.ids.binary_search(id).ok()
    }

    pub fn anchor(&self) -> usize {
        self.anchor
    }

    pub fn current(&self) -> usize {
        self.current
    }

    pub fn neighbors(&self, index: usize) -> &[usize] {
        &self.neighbors[index]
    }

    /// Cosine similarity of a node's label embedding to the anchor's.
    pub fn similarity(&self, index: usize) -> f64 {
        self.similarity[index]
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Step {
        let from = self.current;
        let teleport: f64 = rng.random();
        let (to, teleported) = if teleport < self.alpha {
            (self.anchor, true)
        } else {
            match &self.choosers[from] {
                Some(chooser) => (self.neighbors[from][chooser.sample(rng)], false),
                None => (self.anchor, true),
            }
        };
        self.current = to;
        Step { from, to, teleported }
    }
}

/// A synthetic persona graph sampled from the unigraph.
#[derive(Debug, Clone, PartialEq)]
pub struct FrankenGraph {
    pub synthetic_id: String,
    pub anchor: NodeId,
    pub params: WalkParams,
    pub nodes: BTreeMap<NodeId, Node>,
    pub edges: Vec<Edge>,
    /// Synthetic-local ids of TIME-perturbed nodes, mapped to their unigraph ids.
    pub perturbed: BTreeMap<NodeId, NodeId>,
}

impl GraphView for FrankenGraph {
    fn nodes(&self) -> &BTreeMap<NodeId, Node> {
        &self.nodes
    }

    fn edges(&self) -> &[Edge] {
        &self.edges
    }

    fn provenance_scope(&self) -> ProvenanceScope<'_> {
        ProvenanceScope::Unrestricted
    }
}

impl FrankenGraph {
    pub fn validate(&self) -> ValidationReport {
        validate(self)
    }

    /// Id this node has in the unigraph.
    pub fn source_id<'a>(&'a self, id: &'a NodeId) -> &'a NodeId {
        self.perturbed.get(id).unwrap_or(id)
    }

    /// Union of all node provenance.
    pub fn sources(&self) -> Provenance {
        self.nodes.values().flat_map(|n| n.provenance.iter().cloned()).collect()
    }
}

/// Samples one synthetic persona graph.
pub fn thematic_walk(u: &Unigraph, p: &WalkParams, embed: &dyn Embedder) -> Result<FrankenGraph, WalkError> {
    let id = format!("synthetic-{}", stable_hex(&[p.anchor.as_str(), &p.seed.to_string()], 12));
    thematic_walk_with_id(u, p, embed, id)
}

pub fn thematic_walk_with_id(
    u: &Unigraph,
    p: &WalkParams,
    embed: &dyn Embedder,
    synthetic_id: String,
) -> Result<FrankenGraph, WalkError> {
    p.check()?;
    let mut walker = Walker::new(u, &p.anchor, p.lambda, p.alpha, embed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut visited = BTreeSet::from([walker.anchor()]);
    let mut steps = 0;
    while steps < p.steps() && visited.len() < p.node_budget {
        let s = walker.step(&mut rng);
        visited.insert(s.to);
        steps += 1;
    }
    let visited: BTreeSet<NodeId> = visited.into_iter().map(|i| walker.id(i).clone()).collect();

    let mut edges: Vec<Edge> = u
        .edges
        .iter()
        .filter(|e| visited.contains(&e.src) && visited.contains(&e.dst))
        .cloned()
        .collect();
    let component = component_of(&p.anchor, &edges);
    edges.retain(|e| component.contains(&e.src));
    let nodes: BTreeMap<NodeId, Node> =
        component.iter().map(|id| (id.clone(), u.nodes[id].clone())).collect();

    let mut graph = FrankenGraph {
        synthetic_id,
        anchor: p.anchor.clone(),
        params: p.clone(),
        nodes,
        edges,
        perturbed: BTreeMap::new(),
    };
    if p.time_jitter > 0 {
        perturb_time(&mut graph, p.time_jitter, &mut rng);
    }
    Ok(graph)
}

fn component_of(start: &NodeId, edges: &[Edge]) -> BTreeSet<NodeId> {
    let mut adj: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
    for e in edges {
        adj.entry(&e.src).or_default().push(&e.dst);
        adj.entry(&e.dst).or_default().push(&e.src);
    }
    let mut seen = BTreeSet::from([start.clone()]);
    let mut queue = VecDeque::from([start]);
    while let Some(n) = queue.pop_front() {
        for m in adj.get(n).into_iter().flatten() {
            if seen.insert((*m).clone()) {
                queue.push_back(m);
            }
        }
    }
    seen
}

/// Shifts year and age tokens of every S node reached through a TIME edge.
fn perturb_time<R: Rng + ?Sized>(g: &mut FrankenGraph, jitter: u32, rng: &mut R) {
    let targets: BTreeSet<NodeId> = g
        .edges
        .iter()
        .filter(|e| e.kind == EdgeKind::FS && e.label == Role::Time.as_str())
        .map(|e| e.dst.clone())
        .collect();
    let j = jitter as i64;
    let mut renames: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    for id in targets {
        let offset = rng.random_range(-j..=j);
        let node = &g.nodes[&id];
        let shifted = shift_time_tokens(&node.label, offset);
        if shifted == node.label {
            continue;
        }
        let mut node = g.nodes.remove(&id).expect("target present");
        let new_id = NodeId(format!("{}~{}", id, g.synthetic_id));
        node.id = new_id.clone();
        node.label = shifted;
        g.nodes.insert(new_id.clone(), node);
        g.perturbed.insert(new_id.clone(), id.clone());
        renames.insert(id, new_id);
    }
    if renames.is_empty() {
        return;
    }
    for e in &mut g.edges {
        if let Some(n) = renames.get(&e.src) {
            e.src = n.clone();
        }
        if let Some(n) = renames.get(&e.dst) {
            e.dst = n.clone();
        }
    }
    for node in g.nodes.values_mut() {
        for slot in &mut node.slots {
            if let Some(n) = renames.get(&slot.entity) {
                slot.entity = n.clone();
            }
        }
    }
    crate::graph::canonicalize_edges(&mut g.edges);
}

/// How each synthetic persona in a bank picks its anchor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnchorChoice {
    Fixed(NodeId),
    /// A uniformly drawn I-node (among those with at least one edge) per persona.
    Auto,
}

/// Interpretive nodes that can anchor a walk.
pub fn anchor_candidates(u: &Unigraph) -> Vec<NodeId> {
    let adj = undirected_adjacency(u);
    u.nodes
        .values()
        .filter(|n| n.kind == NodeKind::Interpretive && !adj[&n.id].is_empty())
        .map(|n| n.id.clone())
        .collect()
}

/// Samples `count` synthetic personas. Persona `i` walks with a seed derived
/// from `(params.seed, i)` and is named `synthetic-{i:03}`.
pub fn sample_bank(
    u: &Unigraph,
    params: &WalkParams,
    anchor: &AnchorChoice,
    count: usize,
    embed: &dyn Embedder,
) -> Result<Vec<FrankenGraph>, WalkError> {
    let candidates = anchor_candidates(u);
    (0..count)
        .map(|i| {
            let seed = derive_seed(params.seed, &format!("persona-{i}"));
            let mut p = params.clone();
            p.seed = seed;
            p.anchor = match anchor {
                AnchorChoice::Fixed(id) => id.clone(),
                AnchorChoice::Auto => {
                    if candidates.is_empty() {
                        return Err(WalkError::NoAnchorCandidates);
                    }
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "anchor"));
                    candidates[rng.random_range(0..candidates.len())].clone()
                }
            };
            thematic_walk_with_id(u, &p, embed, format!("synthetic-{i:03}"))
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct FrankenDoc {
    synthetic_id: String,
    anchor: NodeId,
    params: WalkParams,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    perturbed: BTreeMap<NodeId, NodeId>,
    nodes: Vec<NodeDoc>,
    edges: Vec<EdgeDoc>,
}

pub fn save_franken(f: &FrankenGraph) -> Vec<u8> {
    to_canonical_json(&franken_doc(f))
}

fn franken_doc(f: &FrankenGraph) -> FrankenDoc {
    let mut edges = f.edges.clone();
    crate::graph::canonicalize_edges(&mut edges);
    FrankenDoc {
        synthetic_id: f.synthetic_id.clone(),
        anchor: f.anchor.clone(),
        params: f.params.clone(),
        perturbed: f.perturbed.clone(),
        nodes: f.nodes.values().map(|n| NodeDoc::from_node(n, true)).collect(),
        edges: edges.iter().map(|e| EdgeDoc::from_edge(e, true)).collect(),
    }
}

/// JSON value of a sampled graph, in the same shape [`save_franken`] writes.
pub fn franken_json(f: &FrankenGraph) -> serde_json::Value {
    serde_json::to_value(franken_doc(f)).expect("franken graph serializes")
}

pub fn load_franken(bytes: &[u8]) -> Result<FrankenGraph, LoadError> {
    let doc: FrankenDoc = serde_json::from_slice(bytes)?;
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
    let f = FrankenGraph {
        synthetic_id: doc.synthetic_id,
        anchor: doc.anchor,
        params: doc.params,
        nodes,
        edges,
        perturbed: doc.perturbed,
    };
    report.violations.extend(validate(&f).violations);
    if report.is_valid() {
        Ok(f)
    } else {
        Err(LoadError::Validation(report))
    }
}
