//! Synthetic persona banks with known merge structure, for desk-scale runs
//! and tests.
//!
//! Every persona has `nodes_per_persona` nodes in each layer. In each layer,
//! `round(shared_fraction * nodes_per_persona)` labels come from a shared
//! pool and the rest are unique to the persona, so exact-label merging
//! produces predictable merge rates.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Edge, EdgeKind, EntitySpan, Node, NodeKind, PersonaGraph, Role};
use crate::hash::derive_seed;
use crate::metrics::{ItemSpec, ResponseTable};

const THEMES: [&str; 10] = [
    "family duty",
    "economic insecurity",
    "faith under strain",
    "quiet ambition",
    "resilience after loss",
    "belonging",
    "independence",
    "curiosity about the world",
    "service to others",
    "fear of instability",
];

const EVENTS: [&str; 8] = [
    "Started a new job",
    "Moved house",
    "Finished school",
    "Lost a parent",
    "Joined a community group",
    "Changed careers",
    "Had a first child",
    "Took out a loan",
];

const SEASONS: [&str; 4] = ["spring", "summer", "autumn", "winter"];
const PLACES: [&str; 5] = ["Maple Street", "Riverside", "the north side", "Oak Hill", "the old harbor"];
const ORGS: [&str; 4] = ["Acme Works", "the county clinic", "First Baptist", "the union hall"];
const PEOPLE: [&str; 5] = ["my father", "my mother", "an aunt", "a mentor", "my partner"];

const ROLE_CYCLE: [Role; 4] = [Role::Time, Role::Location, Role::Organization, Role::Agent];

/// Largest shared pool: keeps shared years below the range used by unique ones.
pub const MAX_POOL: usize = 800;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub n_personas: usize,
    /// Nodes per layer per persona.
    pub nodes_per_persona: usize,
    pub shared_fraction: f64,
    pub seed: u64,
    /// `None`: every persona uses the same shared labels. `Some(p)`: each
    /// persona draws its shared labels uniformly without replacement from a pool of `p`.
    #[serde(default)]
    pub pool_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid fixture spec: {0}")]
pub struct FixtureError(pub String);

impl FixtureSpec {
    pub fn new(n_personas: usize, nodes_per_persona: usize, shared_fraction: f64, seed: u64) -> Self {
        FixtureSpec { n_personas, nodes_per_persona, shared_fraction, seed, pool_size: None }
    }

    /// Shared labels per persona per layer.
    pub fn shared_per_persona(&self) -> usize {
        (self.shared_fraction * self.nodes_per_persona as f64).round() as usize
    }

    pub fn check(&self) -> Result<(), FixtureError> {
        let err = |m: &str| Err(FixtureError(m.into()));
        if self.n_personas == 0 || self.nodes_per_persona == 0 {
            return err("n_personas and nodes_per_persona must be positive");
        }
        if !(0.0..=1.0).contains(&self.shared_fraction) {
            return err("shared_fraction must lie in [0, 1]");
        }
        let pool = self.pool_size.unwrap_or(self.shared_per_persona());
        if pool < self.shared_per_persona() {
            return err("pool_size is smaller than the shared labels per persona");
        }
        if pool > MAX_POOL {
            return err("pool_size exceeds 800");
        }
        if 1900 + self.n_personas * self.nodes_per_persona > 9999 {
            return err("too many nodes for four-digit years");
        }
        Ok(())
    }
}

/// Merge rate of one layer when all `n` personas share the same `m` of their `c` labels.
pub fn deterministic_merge_rate(n: usize, c: usize, m: usize) -> f64 {
    if n < 2 || m == 0 {
        return 0.0;
    }
    m as f64 / (m + n * (c - m)) as f64
}

/// Expected number of pool labels used by at least two personas when each of
/// `n` personas draws `m` of `pool` labels without replacement.
pub fn expected_shared_merged(n: usize, m: usize, pool: usize) -> f64 {
    let q = m as f64 / pool as f64;
    let n = n as i32;
    pool as f64 * (1.0 - (1.0 - q).powi(n) - n as f64 * q * (1.0 - q).powi(n - 1))
}

/// Expected number of distinct pool labels used by at least one persona.
pub fn expected_shared_used(n: usize, m: usize, pool: usize) -> f64 {
    let q = m as f64 / pool as f64;
    pool as f64 * (1.0 - (1.0 - q).powi(n as i32))
}

fn subject_label(role: Role, index: usize, shared: bool, offset: usize) -> String {
    let pick = |words: &[&str]| words[(index + offset) % words.len()].to_string();
    match (role, shared) {
        (Role::Time, true) => format!("{} {}", pick(&SEASONS), 1000 + index),
        (Role::Time, false) => format!("{} {}", pick(&SEASONS), 1900 + index),
        (Role::Location, _) => format!("{} {}{}", pick(&PLACES), if shared { "s" } else { "u" }, index),
        (Role::Organization, _) => format!("{} {}{}", pick(&ORGS), if shared { "s" } else { "u" }, index),
        _ if shared && index < PEOPLE.len() => PEOPLE[index].to_string(),
        _ => format!("{} {}{}", pick(&PEOPLE), if shared { "s" } else { "u" }, index),
    }
}

fn theme_label(index: usize, shared: bool, offset: usize) -> String {
    let base = THEMES[(index + offset) % THEMES.len()];
    if shared {
        format!("{base} {}", index + 1)
    } else {
        format!("{base} as lived by u{index}")
    }
}

/// Layer labels of one persona: pool indices for shared slots, then unique indices.
struct Layers {
    shared: Vec<usize>,
    unique: Vec<usize>,
}

/// Builds one persona graph. Node `k` of each layer is wired: F_k -role-> S_k;
/// I_k guides F_k (even k) or F_k yields I_k (odd k); F_{k+1} supports I_k.
/// F nodes are chained by `precedes` in canonical label order. Unique F labels
/// carry a qualifier outside the entity span so they stay unique once genericized.
fn build_persona(persona: &str, layers: &Layers, offset: usize, quotes: bool) -> PersonaGraph {
    let mut g = PersonaGraph::new(persona);
    let slots: Vec<(bool, usize)> = layers
        .shared
        .iter()
        .map(|&j| (true, j))
        .chain(layers.unique.iter().map(|&u| (false, u)))
        .collect();
    let c = slots.len();
    let mut facts = Vec::with_capacity(c);
    for (k, &(shared, index)) in slots.iter().enumerate() {
        let role = ROLE_CYCLE[k % ROLE_CYCLE.len()];
        let s_label = subject_label(role, index, shared, offset);
        let s_id = format!("{persona}-S{k}");
        let f_id = format!("{persona}-F{k}");
        let i_id = format!("{persona}-I{k}");

        let mut subject = Node::new(s_id.clone(), NodeKind::Subject, s_label.clone());
        if quotes && shared {
            subject = subject.with_quote(format!("{persona} on {s_label}"));
        }
        let fact = if shared {
            Node::new(f_id.clone(), NodeKind::Factual, format!("{} (milestone {})", EVENTS[(index + offset) % EVENTS.len()], index + 1))
        } else {
            let label = format!("{} in {} (entry u{index})", EVENTS[(index + offset) % EVENTS.len()], s_label);
            let span = EntitySpan::locate(&label, &s_label, role, 0).expect("label contains entity");
            Node::new(f_id.clone(), NodeKind::Factual, label).with_span(span)
        };
        facts.push((fact.canonical_label(), f_id.clone()));
        g.add_node(subject)
            .add_node(fact)
            .add_node(Node::new(i_id.clone(), NodeKind::Interpretive, theme_label(index, shared, offset)))
            .add_edge(Edge::role(f_id.clone(), s_id, role));
        if k % 2 == 0 {
            g.add_edge(Edge::new(i_id.clone(), f_id, EdgeKind::IF, "guides"));
        } else {
            g.add_edge(Edge::new(f_id, i_id.clone(), EdgeKind::FI, "yields"));
        }
        if c > 1 {
            g.add_edge(Edge::new(format!("{persona}-F{}", (k + 1) % c), i_id, EdgeKind::FI, "supports"));
        }
    }
    facts.sort();
    for pair in facts.windows(2) {
        g.add_edge(Edge::new(pair[0].1.clone(), pair[1].1.clone(), EdgeKind::FF, "precedes"));
    }
    g.canonicalize();
    g
}

pub fn persona_name(i: usize) -> String {
    format!("persona-{i:02}")
}

/// Generates a bank of valid persona graphs.
pub fn gen_fixture(spec: &FixtureSpec) -> Result<Vec<PersonaGraph>, FixtureError> {
    spec.check()?;
    let c = spec.nodes_per_persona;
    let m = spec.shared_per_persona();
    let offset = (spec.seed % 40) as usize;
    Ok((0..spec.n_personas)
        .map(|i| {
            let shared = match spec.pool_size {
                None => (0..m).collect(),
                Some(pool) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &format!("pool-{i}")));
                    let mut picked = sample(&mut rng, pool, m).into_vec();
                    picked.sort_unstable();
                    picked
                }
            };
            let unique = (m..c).map(|k| i * c + k).collect();
            build_persona(&persona_name(i), &Layers { shared, unique }, offset, false)
        })
        .collect())
}

/// Four personas whose unigraph has 76 subject, 83 factual and 67
/// interpretive nodes, of which 8, 0 and 12 are merged.
pub fn four_persona_fixture() -> Vec<PersonaGraph> {
    const PERSONAS: usize = 4;
    let mut subjects: Vec<Vec<String>> = vec![Vec::new(); PERSONAS];
    let mut facts: Vec<Vec<String>> = vec![Vec::new(); PERSONAS];
    let mut themes: Vec<Vec<String>> = vec![Vec::new(); PERSONAS];

    let spread = |lists: &mut Vec<Vec<String>>, total: usize, merged: usize, label: &dyn Fn(usize, bool) -> String| {
        for j in 0..merged {
            // The first merged node is shared by three personas, the rest by two.
            let holders = if j == 0 { 3 } else { 2 };
            for h in 0..holders {
                lists[(j + h) % PERSONAS].push(label(j, true));
            }
        }
        for u in 0..total - merged {
            lists[u % PERSONAS].push(label(u, false));
        }
    };
    spread(&mut subjects, 76, 8, &|j, shared| subject_label(ROLE_CYCLE[j % 4], j, shared, 0));
    spread(&mut facts, 83, 0, &|u, _| format!("{} (event {})", EVENTS[u % EVENTS.len()], u + 1));
    spread(&mut themes, 67, 12, &|j, shared| {
        if shared && j == 0 {
            "Economic insecurity driving academic achievement".to_string()
        } else {
            theme_label(j, shared, 0)
        }
    });

    (0..PERSONAS)
        .map(|p| {
            let persona = persona_name(p);
            let mut g = PersonaGraph::new(persona.as_str());
            let (ss, fs, is) = (&subjects[p], &facts[p], &themes[p]);
            for (k, label) in ss.iter().enumerate() {
                g.add_node(Node::new(format!("{persona}-S{k}"), NodeKind::Subject, label.clone()));
            }
            let mut order: Vec<(String, String)> = Vec::new();
            for (k, label) in fs.iter().enumerate() {
                let id = format!("{persona}-F{k}");
                order.push((label.to_lowercase(), id.clone()));
                g.add_node(Node::new(id, NodeKind::Factual, label.clone()));
            }
            for (k, label) in is.iter().enumerate() {
                g.add_node(Node::new(format!("{persona}-I{k}"), NodeKind::Interpretive, label.clone()));
            }
            for k in 0..ss.len() {
                let f = format!("{persona}-F{}", k % fs.len());
                g.add_edge(Edge::role(f, format!("{persona}-S{k}"), ROLE_CYCLE[k % 4]));
            }
            for k in 0..is.len() {
                let i = format!("{persona}-I{k}");
                g.add_edge(Edge::new(i.clone(), format!("{persona}-F{}", k % fs.len()), EdgeKind::IF, "guides"));
                g.add_edge(Edge::new(format!("{persona}-F{}", (k + 3) % fs.len()), i, EdgeKind::FI, "evokes"));
            }
            order.sort();
            for pair in order.windows(2) {
                g.add_edge(Edge::new(pair[0].1.clone(), pair[1].1.clone(), EdgeKind::FF, "precedes"));
            }
            g.canonicalize();
            g
        })
        .collect()
}

/// Hub-shaped bank: every persona holds the same hub node plus one unique
/// node, and contributes at most one key under degree ranking.
pub fn hub_fixture(n_personas: usize) -> Vec<PersonaGraph> {
    (0..n_personas)
        .map(|i| {
            let persona = persona_name(i);
            let mut g = PersonaGraph::new(persona.as_str());
            g.add_node(Node::new("hub", NodeKind::Interpretive, "family duty"))
                .add_node(Node::new("own", NodeKind::Factual, format!("Private memory {i}")))
                .add_node(Node::new("other", NodeKind::Factual, format!("Second private memory {i}")))
                .add_edge(Edge::new("hub", "own", EdgeKind::IF, "guides"))
                .add_edge(Edge::new("hub", "other", EdgeKind::IF, "constrains"));
            g
        })
        .collect()
}

/// Survey items plus D, L and F banks in which L is a noisy copy of D and F a
/// lighter-noise copy of L, so transformation distances tend to be smaller
/// than enrichment distances.
pub fn gen_survey(
    ordinal_items: usize,
    nominal_items: usize,
    respondents: usize,
    seed: u64,
) -> (Vec<ItemSpec>, [ResponseTable; 3]) {
    let mut items = Vec::with_capacity(ordinal_items + nominal_items);
    for i in 0..ordinal_items {
        let k = 3 + i % 5;
        let labels: Vec<String> = (1..=k).map(|c| format!("level {c}")).collect();
        let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
        items.push(ItemSpec::new(&format!("ORD{i:03}"), true, &refs));
    }
    for i in 0..nominal_items {
        items.push(ItemSpec::new(&format!("NOM{i:03}"), false, &["yes", "no", "unsure"][..2 + i % 2]));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "survey"));
    let mut d = ResponseTable::new("D");
    let mut l = ResponseTable::new("L");
    let mut f = ResponseTable::new("F");
    for item in &items {
        let k = item.options_count;
        for r in 0..respondents {
            let who = format!("agent-{r:03}");
            let base = rng.random_range(0..k);
            let enriched = if rng.random_bool(0.4) { rng.random_range(0..k) } else { base };
            let sampled = if rng.random_bool(0.15) { rng.random_range(0..k) } else { enriched };
            for (table, code) in [(&mut d, base), (&mut l, enriched), (&mut f, sampled)] {
                table.record(&items, &who, &item.item_id, &(code + 1).to_string()).expect("generated answers are valid");
            }
        }
    }
    (items, [d, l, f])
}

/// Canonical labels of every node in a bank, per kind.
pub fn label_sets(bank: &[PersonaGraph]) -> [BTreeSet<String>; 3] {
    let mut sets: [BTreeSet<String>; 3] = Default::default();
    for g in bank {
        for n in g.nodes.values() {
            let slot = NodeKind::ALL.iter().position(|k| *k == n.kind).expect("known kind");
            sets[slot].insert(n.canonical_label());
        }
    }
    sets
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unify::{merge, merge_stats, ExactCanonical};

    #[test]
    fn fixtures_validate() {
        for spec in [FixtureSpec::new(5, 8, 0.25, 3), FixtureSpec { pool_size: Some(6), ..FixtureSpec::new(4, 6, 0.5, 9) }] {
            for g in gen_fixture(&spec).unwrap() {
                let report = g.validate();
                assert!(report.is_valid(), "{report}");
            }
        }
        for g in four_persona_fixture().iter().chain(&hub_fixture(3)) {
            assert!(g.validate().is_valid());
        }
    }

    #[test]
    fn deterministic_pool_rates() {
        for (n, c, frac) in [(4, 10, 0.3), (30, 6, 0.5), (2, 5, 1.0), (3, 7, 0.0)] {
            let spec = FixtureSpec::new(n, c, frac, 1);
            let u = merge(&gen_fixture(&spec).unwrap(), &ExactCanonical).unwrap();
            let expected = deterministic_merge_rate(n, c, spec.shared_per_persona());
            let stats = merge_stats(&u);
            for kind in NodeKind::ALL {
                assert_eq!(stats.kind(kind).merge_rate, expected, "{kind:?} n={n} c={c}");
            }
            assert!(u.validate().is_valid());
        }
    }

    #[test]
    fn four_persona_counts() {
        let u = merge(&four_persona_fixture(), &ExactCanonical).unwrap();
        let stats = merge_stats(&u);
        assert_eq!(stats.overall.total, 226);
        assert_eq!((stats.subject.total, stats.subject.merged), (76, 8));
        assert_eq!((stats.factual.total, stats.factual.merged), (83, 0));
        assert_eq!((stats.interpretive.total, stats.interpretive.merged), (67, 12));
    }

    #[test]
    fn spec_checks() {
        assert!(FixtureSpec::new(0, 3, 0.1, 0).check().is_err());
        assert!(FixtureSpec::new(3, 3, 1.1, 0).check().is_err());
        assert!(FixtureSpec { pool_size: Some(1), ..FixtureSpec::new(3, 10, 0.5, 0) }.check().is_err());
    }

    #[test]
    fn occupancy_formula_small_case() {
        // Two personas each taking one of two labels: P(same) = 1/2.
        assert!((expected_shared_merged(2, 1, 2) - 0.5).abs() < 1e-12);
        assert!((expected_shared_used(2, 1, 2) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn survey_is_deterministic_and_complete() {
        let (items, banks) = gen_survey(4, 2, 10, 5);
        let (_, again) = gen_survey(4, 2, 10, 5);
        assert_eq!(banks, again);
        assert_eq!(items.len(), 6);
        assert!(banks.iter().all(|b| b.respondents() == 10));
    }
}
