//! Label genericization.
//!
//! Each annotated entity in an F-node label is swapped for its role's generic
//! token and pulled out into an S node joined by a role-typed F→S edge, so
//! "Graduated from Harvard University" becomes "Graduated from Organization"
//! plus S "Harvard University" and an ORGANIZATION edge. The token positions
//! are kept on the F node as [`GenericSlot`]s, which makes the original label
//! recoverable from the graph.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::graph::{
    canonical_label, char_slice, canonicalize_edges, Edge, EdgeKind, GenericSlot, GraphView, Node,
    NodeId, NodeKind, PersonaGraph, Role,
};
use crate::hash::stable_hex;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenericizeError {
    #[error("node {0} is not a factual node")]
    NotFactual(NodeId),
    #[error("node {node}: unknown role {role:?} in entity span")]
    UnknownRole { node: NodeId, role: String },
    #[error("node {node}: span {start}..{end} does not match the label")]
    InvalidSpan { node: NodeId, start: usize, end: usize },
    #[error("node {node}: spans overlap")]
    OverlappingSpans { node: NodeId },
}

#[derive(Debug, thiserror::Error)]
pub enum RulesError {
    #[error("malformed rules file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unknown role {0:?} in rules")]
    UnknownRole(String),
    #[error("empty generic token for {0}")]
    EmptyToken(Role),
}

/// One generic replacement token per role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GenericRules {
    tokens: BTreeMap<Role, String>,
}

impl Default for GenericRules {
    fn default() -> Self {
        let tokens = Role::ALL
            .into_iter()
            .map(|r| {
                let t = match r {
                    Role::Organization => "Organization",
                    Role::Location => "Place",
                    Role::Agent | Role::Patient | Role::Recipient => "Person",
                    Role::Discipline => "Field",
                    Role::Instrument => "Tool",
                    Role::Time => "Time",
                };
                (r, t.to_string())
            })
            .collect();
        GenericRules { tokens }
    }
}

impl GenericRules {
    /// Overrides the default tokens with a JSON `{ "ROLE": "token" }` map.
    pub fn from_json(bytes: &[u8]) -> Result<Self, RulesError> {
        let raw: BTreeMap<String, String> = serde_json::from_slice(bytes)?;
        let mut rules = GenericRules::default();
        for (role, token) in raw {
            let role: Role = role.parse().map_err(|_| RulesError::UnknownRole(role.clone()))?;
            rules.set(role, token)?;
        }
        Ok(rules)
    }

    pub fn set(&mut self, role: Role, token: impl Into<String>) -> Result<(), RulesError> {
        let token = token.into();
        if token.trim().is_empty() {
            return Err(RulesError::EmptyToken(role));
        }
        self.tokens.insert(role, token);
        Ok(())
    }

    pub fn token(&self, role: Role) -> &str {
        &self.tokens[&role]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rules serialize")
    }
}

/// Result of genericizing one F node.
#[derive(Debug, Clone, PartialEq)]
pub struct Genericized {
    pub node: Node,
    pub subjects: Vec<Node>,
    pub edges: Vec<Edge>,
}

/// Id used for an S node extracted from a label.
pub fn entity_node_id(label: &str) -> NodeId {
    NodeId(format!("S-{}", stable_hex(&["S", &canonical_label(label)], 12)))
}

/// Genericizes a single F node. Extracted S nodes get ids derived from their
/// canonical label; an F node without spans comes back unchanged.
pub fn genericize_node(node: &Node, rules: &GenericRules) -> Result<Genericized, GenericizeError> {
    if node.kind != NodeKind::Factual {
        return Err(GenericizeError::NotFactual(node.id.clone()));
    }
    if node.entity_spans.is_empty() {
        return Ok(Genericized { node: node.clone(), subjects: Vec::new(), edges: Vec::new() });
    }

    let mut spans = node.entity_spans.clone();
    spans.sort_by_key(|s| (s.start, s.end));
    let chars: Vec<char> = node.label.chars().collect();
    let mut label = String::with_capacity(node.label.len());
    let mut out_len = 0usize;
    let mut cursor = 0usize;
    let mut slots = Vec::with_capacity(spans.len());
    let mut subjects: Vec<Node> = Vec::new();
    let mut edges = Vec::new();

    for span in &spans {
        let role: Role = span.role.parse().map_err(|_| GenericizeError::UnknownRole {
            node: node.id.clone(),
            role: span.role.clone(),
        })?;
        if span.start < cursor {
            return Err(GenericizeError::OverlappingSpans { node: node.id.clone() });
        }
        if span.start >= span.end || char_slice(&node.label, span.start, span.end) != Some(span.text.as_str()) {
            return Err(GenericizeError::InvalidSpan {
                node: node.id.clone(),
                start: span.start,
                end: span.end,
            });
        }
        let before: String = chars[cursor..span.start].iter().collect();
        out_len += chars[cursor..span.start].len();
        label.push_str(&before);

        let token = rules.token(role);
        let start = out_len;
        label.push_str(token);
        out_len += token.chars().count();

        let entity = entity_node_id(&span.text);
        let surface = match subjects.iter().find(|s| s.id == entity) {
            Some(existing) => (existing.label != span.text).then(|| span.text.clone()),
            None => {
                let mut s = Node::new(entity.clone(), NodeKind::Subject, span.text.clone());
                s.provenance = node.provenance.clone();
                subjects.push(s);
                None
            }
        };
        let mut edge = Edge::role(node.id.clone(), entity.clone(), role);
        edge.provenance = node.provenance.clone();
        edges.push(edge);
        slots.push(GenericSlot { role, start, end: out_len, entity, surface });
        cursor = span.end;
    }
    label.extend(&chars[cursor..]);

    canonicalize_edges(&mut edges);
    let mut generic = node.clone();
    generic.label = label;
    generic.entity_spans.clear();
    generic.slots = slots;
    Ok(Genericized { node: generic, subjects, edges })
}

/// Genericizes every F node of a persona graph. An extracted entity whose
/// canonical label matches an S node already in the graph reuses that node.
pub fn genericize_graph(graph: &PersonaGraph, rules: &GenericRules) -> Result<PersonaGraph, GenericizeError> {
    let mut out = graph.clone();
    let mut by_label: BTreeMap<String, NodeId> = graph
        .nodes
        .values()
        .filter(|n| n.kind == NodeKind::Subject)
        .map(|n| (n.canonical_label(), n.id.clone()))
        .collect();

    for node in graph.nodes.values().filter(|n| n.kind == NodeKind::Factual && !n.entity_spans.is_empty()) {
        let mut g = genericize_node(node, rules)?;
        let mut remap: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        let subject_labels: BTreeMap<NodeId, String> =
            g.subjects.iter().map(|s| (s.id.clone(), s.label.clone())).collect();
        for subject in g.subjects {
            let key = subject.canonical_label();
            let target = match by_label.get(&key) {
                Some(existing) => existing.clone(),
                None => {
                    let id = free_id(&out, subject.id.clone());
                    by_label.insert(key, id.clone());
                    let mut s = subject.clone();
                    s.id = id.clone();
                    out.nodes.insert(id.clone(), s);
                    id
                }
            };
            remap.insert(subject.id, target);
        }
        for slot in &mut g.node.slots {
            let original = match slot.surface.take() {
                Some(text) => text,
                None => subject_labels[&slot.entity].clone(),
            };
            let target = remap[&slot.entity].clone();
            if out.nodes[&target].label != original {
                slot.surface = Some(original);
            }
            slot.entity = target;
        }
        for mut edge in g.edges {
            edge.dst = remap[&edge.dst].clone();
            out.edges.push(edge);
        }
        out.nodes.insert(g.node.id.clone(), g.node);
    }
    out.canonicalize();
    Ok(out)
}

fn free_id(graph: &PersonaGraph, base: NodeId) -> NodeId {
    if !graph.nodes.contains_key(&base) {
        return base;
    }
    (1..)
        .map(|i| NodeId(format!("{}~{i}", base.0)))
        .find(|id| !graph.nodes.contains_key(id))
        .expect("unbounded id space")
}

/// Rebuilds a genericized label by writing each slot's entity back over its
/// token. `entity_label` resolves slot entities; unresolved slots keep the token.
pub fn reconstruct_label<'a>(node: &Node, entity_label: impl Fn(&NodeId) -> Option<&'a str>) -> String {
    let chars: Vec<char> = node.label.chars().collect();
    let mut out = String::with_capacity(node.label.len());
    let mut cursor = 0;
    for slot in &node.slots {
        out.extend(&chars[cursor..slot.start]);
        match (&slot.surface, entity_label(&slot.entity)) {
            (Some(surface), _) => out.push_str(surface),
            (None, Some(label)) => out.push_str(label),
            (None, None) => out.extend(&chars[slot.start..slot.end]),
        }
        cursor = slot.end;
    }
    out.extend(&chars[cursor..]);
    out
}

/// Reconstructs every genericized F node of `graph`, keyed by node id.
pub fn reconstruct_all(graph: &impl GraphView) -> BTreeMap<NodeId, String> {
    graph
        .nodes()
        .values()
        .filter(|n| n.kind == NodeKind::Factual)
        .map(|n| (n.id.clone(), reconstruct_label(n, |id| graph.node(id).map(|s| s.label.as_str()))))
        .collect()
}

/// True when every FS edge a slot depends on is present in the graph.
pub fn slots_are_linked(graph: &impl GraphView, node: &Node) -> bool {
    node.slots.iter().all(|slot| {
        graph.edges().iter().any(|e| {
            e.kind == EdgeKind::FS && e.src == node.id && e.dst == slot.entity && e.label == slot.role.as_str()
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{validate, EntitySpan};

    fn fnode(id: &str, label: &str, spans: &[(Role, &str)]) -> Node {
        let mut n = Node::new(id, NodeKind::Factual, label);
        let mut from = 0;
        for (role, text) in spans {
            let s = EntitySpan::locate(label, text, *role, from).expect("span text in label");
            from = s.end;
            n.entity_spans.push(s);
        }
        n
    }

    #[test]
    fn harvard_example() {
        let n = fnode("f1", "Graduated from Harvard University", &[(Role::Organization, "Harvard University")]);
        let g = genericize_node(&n, &GenericRules::default()).unwrap();
        assert_eq!(g.node.label, "Graduated from Organization");
        assert!(g.node.entity_spans.is_empty());
        assert_eq!(g.subjects.len(), 1);
        assert_eq!(g.subjects[0].label, "Harvard University");
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].label, "ORGANIZATION");
        assert_eq!(g.edges[0].dst, g.subjects[0].id);
    }

    #[test]
    fn finer_subtype_via_rules() {
        let mut rules = GenericRules::default();
        rules.set(Role::Organization, "University").unwrap();
        let n = fnode("f1", "Graduated from Harvard University", &[(Role::Organization, "Harvard University")]);
        assert_eq!(genericize_node(&n, &rules).unwrap().node.label, "Graduated from University");
    }

    #[test]
    fn no_spans_is_identity() {
        let n = Node::new("f", NodeKind::Factual, "Learned to swim");
        let g = genericize_node(&n, &GenericRules::default()).unwrap();
        assert_eq!(g.node, n);
        assert!(g.subjects.is_empty() && g.edges.is_empty());
    }

    /// Left-to-right string rewrite used as an independent check.
    fn rewrite_oracle(label: &str, spans: &[(&str, &str)]) -> String {
        let mut out = String::new();
        let mut rest = label;
        for (text, token) in spans {
            let at = rest.find(text).unwrap();
            out.push_str(&rest[..at]);
            out.push_str(token);
            rest = &rest[at + text.len()..];
        }
        out.push_str(rest);
        out
    }

    #[test]
    fn two_spans_with_offset_adjustment() {
        let label = "Moved to Chicago at age nine";
        let n = fnode("f", label, &[(Role::Location, "Chicago"), (Role::Time, "age nine")]);
        let g = genericize_node(&n, &GenericRules::default()).unwrap();
        let expected = rewrite_oracle(label, &[("Chicago", "Place"), ("age nine", "Time")]);
        assert_eq!(g.node.label, expected);
        assert_eq!(g.node.label, "Moved to Place at Time");
        assert_eq!(g.subjects.len(), 2);
        assert_eq!(g.edges.len(), 2);
        let slot_text: Vec<_> =
            g.node.slots.iter().map(|s| char_slice(&g.node.label, s.start, s.end).unwrap()).collect();
        assert_eq!(slot_text, ["Place", "Time"]);
    }

    #[test]
    fn unknown_role_is_error() {
        let mut n = Node::new("f", NodeKind::Factual, "Met Ann");
        n.entity_spans.push(EntitySpan::new(4, 7, "by", "Ann"));
        assert!(matches!(
            genericize_node(&n, &GenericRules::default()),
            Err(GenericizeError::UnknownRole { .. })
        ));
    }

    #[test]
    fn shared_entity_deduplicated_within_graph() {
        let mut g = PersonaGraph::new("p");
        g.add_node(fnode("f1", "Applied to Harvard University", &[(Role::Organization, "Harvard University")]))
            .add_node(fnode("f2", "Graduated from Harvard University", &[(Role::Organization, "Harvard University")]));
        let out = genericize_graph(&g, &GenericRules::default()).unwrap();
        let subjects: Vec<_> = out.nodes.values().filter(|n| n.kind == NodeKind::Subject).collect();
        assert_eq!(subjects.len(), 1);
        let incoming = out.edges.iter().filter(|e| e.dst == subjects[0].id).count();
        assert_eq!(incoming, 2);
        assert!(validate(&out).is_valid());
    }

    #[test]
    fn existing_subject_reused_and_reconstruction_exact() {
        let mut g = PersonaGraph::new("p");
        g.add_node(Node::new("dad", NodeKind::Subject, "My Father"))
            .add_node(fnode("f1", "Called my father in Ohio", &[(Role::Recipient, "my father"), (Role::Location, "Ohio")]));
        let out = genericize_graph(&g, &GenericRules::default()).unwrap();
        assert_eq!(out.nodes.len(), 3);
        let f = &out.nodes[&NodeId::from("f1")];
        assert_eq!(f.label, "Called Person in Place");
        assert_eq!(f.slots[0].entity, NodeId::from("dad"));
        assert_eq!(f.slots[0].surface.as_deref(), Some("my father"));
        assert_eq!(reconstruct_all(&out)[&NodeId::from("f1")], "Called my father in Ohio");
        assert!(slots_are_linked(&out, f));
        assert_eq!(genericize_graph(&out, &GenericRules::default()).unwrap(), out);
    }

    #[test]
    fn rules_file_overrides_and_rejects() {
        let rules = GenericRules::from_json(br#"{"LOCATION": "City"}"#).unwrap();
        assert_eq!(rules.token(Role::Location), "City");
        assert_eq!(rules.token(Role::Time), "Time");
        assert!(matches!(GenericRules::from_json(br#"{"WHERE": "x"}"#), Err(RulesError::UnknownRole(_))));
        assert!(matches!(GenericRules::from_json(br#"{"TIME": " "}"#), Err(RulesError::EmptyToken(Role::Time))));
    }
}
