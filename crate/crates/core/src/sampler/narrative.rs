//! Plain-text rendering of a synthetic graph: factual events in `precedes`
//! order, each followed by the interpretive themes attached to it.

use std::collections::{BTreeMap, BTreeSet};

use super::FrankenGraph;
use crate::graph::{canonical_label, EdgeKind, Node, NodeId, NodeKind, Role};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct OrderKey {
    untimed: bool,
    time: String,
    label: String,
    id: NodeId,
}

/// Renders the graph as one sentence per factual node. Ties in the
/// chronology are broken by attached TIME label, then by canonical label.
pub fn render_narrative(f: &FrankenGraph) -> String {
    let facts: BTreeMap<&NodeId, &Node> =
        f.nodes.iter().filter(|(_, n)| n.kind == NodeKind::Factual).collect();
    let key = |id: &NodeId| {
        let time = f
            .edges
            .iter()
            .filter(|e| e.kind == EdgeKind::FS && &e.src == id && e.label == Role::Time.as_str())
            .filter_map(|e| f.nodes.get(&e.dst))
            .map(|n| canonical_label(&n.label))
            .min();
        OrderKey {
            untimed: time.is_none(),
            time: time.unwrap_or_default(),
            label: canonical_label(&facts[id].label),
            id: id.clone(),
        }
    };

    let mut indegree: BTreeMap<&NodeId, usize> = facts.keys().map(|id| (*id, 0)).collect();
    let mut successors: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
    for e in f.edges.iter().filter(|e| e.kind == EdgeKind::FF && e.label == "precedes") {
        if facts.contains_key(&e.src) && facts.contains_key(&e.dst) {
            successors.entry(&e.src).or_default().push(&e.dst);
            *indegree.get_mut(&e.dst).expect("fact") += 1;
        }
    }
    let mut ready: BTreeSet<OrderKey> =
        indegree.iter().filter(|(_, d)| **d == 0).map(|(id, _)| key(id)).collect();
    let mut order = Vec::with_capacity(facts.len());
    while let Some(next) = ready.pop_first() {
        for s in successors.get(&next.id).into_iter().flatten() {
            let d = indegree.get_mut(s).expect("fact");
            *d -= 1;
            if *d == 0 {
                ready.insert(key(s));
            }
        }
        order.push(next.id);
    }
    if order.len() < facts.len() {
        let placed: BTreeSet<&NodeId> = order.iter().collect();
        let mut rest: Vec<OrderKey> = facts.keys().filter(|id| !placed.contains(*id)).map(|id| key(id)).collect();
        rest.sort();
        order.extend(rest.into_iter().map(|k| k.id));
    }

    let mut out = String::new();
    if let Some(anchor) = f.nodes.get(&f.anchor) {
        out.push_str(&format!("Theme: {}\n", anchor.label));
    }
    for id in &order {
        out.push_str(&sentence(f, facts[id]));
        out.push('\n');
    }
    out
}

fn sentence(f: &FrankenGraph, node: &Node) -> String {
    let mut text = fill_slots(f, node);
    if let Some(first) = text.chars().next() {
        let upper: String = first.to_uppercase().collect();
        text.replace_range(..first.len_utf8(), &upper);
    }
    let mut clauses = Vec::new();
    for e in &f.edges {
        let other = match e.kind {
            EdgeKind::FI if e.src == node.id => &e.dst,
            EdgeKind::IF if e.dst == node.id => &e.src,
            _ => continue,
        };
        let Some(theme) = f.nodes.get(other) else { continue };
        let verb = match (e.kind, e.label.as_str()) {
            (EdgeKind::IF, "guides") => "guided by",
            (EdgeKind::IF, "constrains") => "constrained by",
            (_, label) => label,
        };
        clauses.push(format!("{verb}: {}", theme.label));
    }
    let text = text.trim_end_matches('.');
    if clauses.is_empty() {
        format!("{text}.")
    } else {
        format!("{text} ({}).", clauses.join("; "))
    }
}

/// Substitutes the sampled entity label into each slot; slots whose entity
/// was not sampled keep their generic token.
fn fill_slots(f: &FrankenGraph, node: &Node) -> String {
    let chars: Vec<char> = node.label.chars().collect();
    let mut out = String::with_capacity(node.label.len());
    let mut cursor = 0;
    for slot in &node.slots {
        out.extend(&chars[cursor..slot.start]);
        match f.nodes.get(&slot.entity) {
            Some(entity) => out.push_str(&entity.label),
            None => out.extend(&chars[slot.start..slot.end]),
        }
        cursor = slot.end;
    }
    out.extend(&chars[cursor..]);
    out
}
