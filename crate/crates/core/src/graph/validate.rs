use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use super::{char_slice, EdgeKind, GraphView, NodeId, NodeKind, ProvenanceScope, Role};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    EmptyGraph,
    EmptyLabel,
    DuplicateNodeId,
    UnknownNodeKind,
    ForbiddenEdgeKind,
    EdgeKindMismatch,
    DanglingEdge,
    UnknownRole,
    UnknownEdgeLabel,
    PrecedesCycle,
    SpanOnNonFactual,
    SpanOutOfBounds,
    SpanTextMismatch,
    OverlappingSpans,
    InvalidSlot,
    EmptyProvenance,
    ProvenanceMismatch,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::EmptyGraph => "empty graph",
            Rule::EmptyLabel => "empty label",
            Rule::DuplicateNodeId => "duplicate node id",
            Rule::UnknownNodeKind => "unknown node kind",
            Rule::ForbiddenEdgeKind => "forbidden edge kind",
            Rule::EdgeKindMismatch => "edge kind mismatch",
            Rule::DanglingEdge => "dangling edge",
            Rule::UnknownRole => "unknown role",
            Rule::UnknownEdgeLabel => "unknown edge label",
            Rule::PrecedesCycle => "precedes cycle",
            Rule::SpanOnNonFactual => "span on non-factual node",
            Rule::SpanOutOfBounds => "span out of bounds",
            Rule::SpanTextMismatch => "span text mismatch",
            Rule::OverlappingSpans => "overlapping spans",
            Rule::InvalidSlot => "invalid slot",
            Rule::EmptyProvenance => "empty provenance",
            Rule::ProvenanceMismatch => "provenance mismatch",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub rule: Rule,
    /// Node id or edge description the violation refers to.
    pub subject: String,
    pub message: String,
}

impl Violation {
    pub fn new(rule: Rule, subject: impl Into<String>, message: impl Into<String>) -> Self {
        Violation { rule, subject: subject.into(), message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.message, self.subject)
    }
}

/// Every grammar or ontology violation found in a graph. Empty means valid.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, rule: Rule) -> usize {
        self.violations.iter().filter(|v| v.rule == rule).count()
    }

    pub fn push(&mut self, v: Violation) {
        self.violations.push(v);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Checks a graph against the ontology and edge grammar. Never mutates or fails.
pub fn validate(g: &impl GraphView) -> ValidationReport {
    let mut report = ValidationReport::default();
    let nodes = g.nodes();
    if nodes.is_empty() {
        report.push(Violation::new(Rule::EmptyGraph, "graph", "empty graph"));
    }

    for node in nodes.values() {
        let id = node.id.as_str();
        if node.label.trim().is_empty() {
            report.push(Violation::new(Rule::EmptyLabel, id, "empty label"));
        }
        check_spans(node, &mut report);
        check_slots(node, &mut report);
        check_provenance(id, &node.provenance, g.provenance_scope(), &mut report);
    }

    for edge in g.edges() {
        let subject = edge.describe();
        let (Some(src), Some(dst)) = (nodes.get(&edge.src), nodes.get(&edge.dst)) else {
            report.push(Violation::new(
                Rule::DanglingEdge,
                &subject,
                "edge references a missing node",
            ));
            continue;
        };
        match EdgeKind::between(src.kind, dst.kind) {
            None => {
                report.push(Violation::new(
                    Rule::ForbiddenEdgeKind,
                    &subject,
                    format!("forbidden edge kind {}{}", src.kind, dst.kind),
                ));
                continue;
            }
            Some(actual) if actual != edge.kind => {
                report.push(Violation::new(
                    Rule::EdgeKindMismatch,
                    &subject,
                    format!("edge declared {} joins {}→{}", edge.kind, src.kind, dst.kind),
                ));
                continue;
            }
            Some(_) => {}
        }
        if !edge.kind.allows_label(&edge.label) {
            let rule = if edge.kind == EdgeKind::FS { Rule::UnknownRole } else { Rule::UnknownEdgeLabel };
            report.push(Violation::new(
                rule,
                &subject,
                format!("{} {:?} for {} edge", rule.name(), edge.label, edge.kind),
            ));
        }
        check_provenance(&subject, &edge.provenance, g.provenance_scope(), &mut report);
    }

    for cycle in precedes_cycles(g) {
        let ids: Vec<&str> = cycle.iter().map(NodeId::as_str).collect();
        report.push(Violation::new(
            Rule::PrecedesCycle,
            ids.join(" -> "),
            "precedes cycle",
        ));
    }
    report
}

fn check_spans(node: &super::Node, report: &mut ValidationReport) {
    if node.entity_spans.is_empty() {
        return;
    }
    let id = node.id.as_str();
    if node.kind != NodeKind::Factual {
        report.push(Violation::new(Rule::SpanOnNonFactual, id, "entity spans on non-factual node"));
        return;
    }
    let len = node.label.chars().count();
    let mut ordered: Vec<_> = node.entity_spans.iter().collect();
    ordered.sort_by_key(|s| (s.start, s.end));
    for span in &ordered {
        if span.role.parse::<Role>().is_err() {
            report.push(Violation::new(
                Rule::UnknownRole,
                id,
                format!("unknown role {:?} in entity span", span.role),
            ));
        }
        if span.start >= span.end || span.end > len {
            report.push(Violation::new(
                Rule::SpanOutOfBounds,
                id,
                format!("span {}..{} outside label of length {len}", span.start, span.end),
            ));
        } else if char_slice(&node.label, span.start, span.end) != Some(span.text.as_str()) {
            report.push(Violation::new(
                Rule::SpanTextMismatch,
                id,
                format!("span {}..{} does not cover {:?}", span.start, span.end, span.text),
            ));
        }
    }
    for pair in ordered.windows(2) {
        if pair[1].start < pair[0].end {
            report.push(Violation::new(
                Rule::OverlappingSpans,
                id,
                format!("spans {}..{} and {}..{} overlap", pair[0].start, pair[0].end, pair[1].start, pair[1].end),
            ));
        }
    }
}

fn check_slots(node: &super::Node, report: &mut ValidationReport) {
    if node.slots.is_empty() {
        return;
    }
    let len = node.label.chars().count();
    let ok = node.kind == NodeKind::Factual
        && node.slots.iter().all(|s| s.start < s.end && s.end <= len)
        && node.slots.windows(2).all(|w| w[0].end <= w[1].start);
    if !ok {
        report.push(Violation::new(Rule::InvalidSlot, node.id.as_str(), "invalid reconstruction slot"));
    }
}

fn check_provenance(
    subject: &str,
    prov: &super::Provenance,
    scope: ProvenanceScope<'_>,
    report: &mut ValidationReport,
) {
    if prov.is_empty() {
        report.push(Violation::new(Rule::EmptyProvenance, subject, "empty provenance"));
        return;
    }
    let ok = match scope {
        ProvenanceScope::Single(p) => prov.len() == 1 && prov.contains(p),
        ProvenanceScope::Within(set) => prov.is_subset(set),
        ProvenanceScope::Unrestricted => true,
    };
    if !ok {
        report.push(Violation::new(
            Rule::ProvenanceMismatch,
            subject,
            "provenance outside the graph's sources",
        ));
    }
}

/// Cycles in the subgraph of FF "precedes" edges, one per back edge found by DFS.
pub(crate) fn precedes_cycles(g: &impl GraphView) -> Vec<Vec<NodeId>> {
    let mut succ: BTreeMap<&NodeId, BTreeSet<&NodeId>> = BTreeMap::new();
    for e in g.edges() {
        if e.kind == EdgeKind::FF && e.label == "precedes" {
            succ.entry(&e.src).or_default().insert(&e.dst);
        }
    }

    #[derive(Clone, Copy, PartialEq)]
    enum Color {
        White,
        Grey,
        Black,
    }
    let mut color: BTreeMap<&NodeId, Color> = BTreeMap::new();
    let mut cycles = Vec::new();
    let roots: Vec<&NodeId> = succ.keys().copied().collect();

    for root in roots {
        if color.get(root).copied().unwrap_or(Color::White) != Color::White {
            continue;
        }
        // Iterative DFS: stack of (node, remaining successors).
        let mut path: Vec<&NodeId> = vec![root];
        let mut stack: Vec<Vec<&NodeId>> =
            vec![succ.get(root).map(|s| s.iter().rev().copied().collect()).unwrap_or_default()];
        color.insert(root, Color::Grey);
        while let Some(pending) = stack.last_mut() {
            match pending.pop() {
                Some(next) => match color.get(next).copied().unwrap_or(Color::White) {
                    Color::White => {
                        color.insert(next, Color::Grey);
                        path.push(next);
                        stack.push(
                            succ.get(next).map(|s| s.iter().rev().copied().collect()).unwrap_or_default(),
                        );
                    }
                    Color::Grey => {
                        let start = path.iter().position(|n| *n == next).unwrap_or(0);
                        cycles.push(path[start..].iter().map(|n| (*n).clone()).collect());
                    }
                    Color::Black => {}
                },
                None => {
                    stack.pop();
                    if let Some(done) = path.pop() {
                        color.insert(done, Color::Black);
                    }
                }
            }
        }
    }
    cycles
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, EntitySpan, Node, PersonaGraph};

    fn kind_node(kind: NodeKind, id: &str) -> Node {
        Node::new(id, kind, format!("{kind} node {id}"))
    }

    #[test]
    fn minimal_fs_graph_is_valid() {
        let mut g = PersonaGraph::new("p1");
        g.add_node(kind_node(NodeKind::Factual, "f"))
            .add_node(kind_node(NodeKind::Subject, "s"))
            .add_edge(Edge::role("f", "s", Role::Agent));
        assert!(validate(&g).is_valid(), "{}", validate(&g));
    }

    #[test]
    fn ii_edge_is_forbidden() {
        let mut g = PersonaGraph::new("p1");
        g.add_node(kind_node(NodeKind::Interpretive, "a"))
            .add_node(kind_node(NodeKind::Interpretive, "b"))
            .add_edge(Edge::new("a", "b", EdgeKind::FI, "yields"));
        let r = validate(&g);
        assert_eq!(r.len(), 1);
        assert_eq!(r.violations[0].rule, Rule::ForbiddenEdgeKind);
        assert_eq!(r.violations[0].message, "forbidden edge kind II");
    }

    #[test]
    fn two_node_precedes_cycle_reported_once() {
        let mut g = PersonaGraph::new("p1");
        g.add_node(kind_node(NodeKind::Factual, "a"))
            .add_node(kind_node(NodeKind::Factual, "b"))
            .add_edge(Edge::new("a", "b", EdgeKind::FF, "precedes"))
            .add_edge(Edge::new("b", "a", EdgeKind::FF, "precedes"));
        let r = validate(&g);
        assert_eq!(r.len(), 1, "{r}");
        assert_eq!(r.violations[0].message, "precedes cycle");
    }

    #[test]
    fn causal_cycles_are_permitted() {
        let mut g = PersonaGraph::new("p1");
        g.add_node(kind_node(NodeKind::Factual, "a"))
            .add_node(kind_node(NodeKind::Factual, "b"))
            .add_edge(Edge::new("a", "b", EdgeKind::FF, "causes"))
            .add_edge(Edge::new("b", "a", EdgeKind::FF, "enables"));
        assert!(validate(&g).is_valid());
    }

    #[test]
    fn fi_if_two_cycle_permitted() {
        let mut g = PersonaGraph::new("p1");
        g.add_node(kind_node(NodeKind::Factual, "f"))
            .add_node(kind_node(NodeKind::Interpretive, "i"))
            .add_edge(Edge::new("f", "i", EdgeKind::FI, "yields"))
            .add_edge(Edge::new("i", "f", EdgeKind::IF, "guides"));
        assert!(validate(&g).is_valid());
    }

    #[test]
    fn labels_outside_vocabulary_rejected() {
        let mut g = PersonaGraph::new("p1");
        g.add_node(kind_node(NodeKind::Factual, "f"))
            .add_node(kind_node(NodeKind::Factual, "g"))
            .add_node(kind_node(NodeKind::Subject, "s"))
            .add_edge(Edge::new("f", "g", EdgeKind::FF, "follows"))
            .add_edge(Edge::new("f", "s", EdgeKind::FS, "by"));
        let r = validate(&g);
        assert_eq!(r.count(Rule::UnknownEdgeLabel), 1);
        assert_eq!(r.count(Rule::UnknownRole), 1);
    }

    #[test]
    fn declared_kind_must_match_endpoints() {
        let mut g = PersonaGraph::new("p1");
        g.add_node(kind_node(NodeKind::Factual, "f"))
            .add_node(kind_node(NodeKind::Factual, "g"))
            .add_edge(Edge::new("f", "g", EdgeKind::FI, "yields"));
        assert_eq!(validate(&g).count(Rule::EdgeKindMismatch), 1);
    }

    #[test]
    fn span_checks() {
        let mut g = PersonaGraph::new("p1");
        let label = "Met Ann in Paris";
        g.add_node(
            Node::new("f", NodeKind::Factual, label)
                .with_span(EntitySpan::new(4, 7, "AGENT", "Ann"))
                .with_span(EntitySpan::new(5, 9, "LOCATION", "nn i"))
                .with_span(EntitySpan::new(11, 40, "LOCATION", "Paris")),
        )
        .add_node(Node::new("s", NodeKind::Subject, "Ann").with_span(EntitySpan::new(0, 3, "AGENT", "Ann")));
        let r = validate(&g);
        assert_eq!(r.count(Rule::OverlappingSpans), 1);
        assert_eq!(r.count(Rule::SpanOutOfBounds), 1);
        assert_eq!(r.count(Rule::SpanOnNonFactual), 1);
    }

    #[test]
    fn provenance_rules() {
        let mut g = PersonaGraph::new("p1");
        g.add_node(kind_node(NodeKind::Factual, "f"));
        g.nodes.get_mut(&NodeId::from("f")).unwrap().provenance.insert("p2".into());
        assert_eq!(validate(&g).count(Rule::ProvenanceMismatch), 1);
        g.nodes.get_mut(&NodeId::from("f")).unwrap().provenance.clear();
        assert_eq!(validate(&g).count(Rule::EmptyProvenance), 1);
    }

    #[test]
    fn empty_and_blank() {
        let g = PersonaGraph::new("p1");
        assert_eq!(validate(&g).count(Rule::EmptyGraph), 1);
        let mut g = PersonaGraph::new("p1");
        g.add_node(Node::new("f", NodeKind::Factual, "  \t"));
        assert_eq!(validate(&g).count(Rule::EmptyLabel), 1);
    }

    #[test]
    fn dangling_edge() {
        let mut g = PersonaGraph::new("p1");
        g.add_node(kind_node(NodeKind::Factual, "f")).add_edge(Edge::role("f", "ghost", Role::Time));
        assert_eq!(validate(&g).count(Rule::DanglingEdge), 1);
    }

    #[test]
    fn longer_cycle_and_dag() {
        let mut g = PersonaGraph::new("p1");
        for id in ["a", "b", "c", "d"] {
            g.add_node(kind_node(NodeKind::Factual, id));
        }
        g.add_edge(Edge::new("a", "b", EdgeKind::FF, "precedes"))
            .add_edge(Edge::new("b", "c", EdgeKind::FF, "precedes"))
            .add_edge(Edge::new("a", "c", EdgeKind::FF, "precedes"))
            .add_edge(Edge::new("c", "d", EdgeKind::FF, "precedes"));
        assert!(validate(&g).is_valid());
        g.add_edge(Edge::new("d", "b", EdgeKind::FF, "precedes"));
        let r = validate(&g);
        assert_eq!(r.count(Rule::PrecedesCycle), 1);
        assert_eq!(r.violations[0].subject, "b -> c -> d");
    }
}
