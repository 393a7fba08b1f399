//! Differentially private set union over node keys.
//!
//! Every persona contributes at most `max_contribution` distinct node keys
//! (its highest-degree ones) and spreads a total weight of 1 evenly across
//! them. Each key's accumulated weight gets Laplace(1/ε) noise and the key is
//! released when the noisy weight exceeds `1 + ln(1/(2δ))/ε`. The unigraph is
//! then assembled from released keys only.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{assemble, cluster, EquivalenceProvider, MergeError, NodeKey, Unigraph};
use crate::graph::{undirected_adjacency, PersonaGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpParams {
    /// Privacy budget; `f64::INFINITY` disables noise and thresholding.
    pub epsilon: f64,
    pub delta: f64,
    pub max_contribution: usize,
}

impl DpParams {
    pub fn new(epsilon: f64, delta: f64, max_contribution: usize) -> Self {
        DpParams { epsilon, delta, max_contribution }
    }

    pub fn check(&self) -> Result<(), MergeError> {
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(MergeError::InvalidParams(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(MergeError::InvalidParams(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.max_contribution == 0 {
            return Err(MergeError::InvalidParams("max_contribution must be >= 1".into()));
        }
        Ok(())
    }

    /// Release threshold `1 + ln(1/(2δ))/ε`.
    pub fn threshold(&self) -> f64 {
        1.0 + (1.0 / (2.0 * self.delta)).ln() / self.epsilon
    }
}

/// One draw from the standard Laplace distribution (location 0, scale 1).
pub fn laplace_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let tail = 1.0 - 2.0 * u.abs();
        if tail > 0.0 {
            return -u.signum() * tail.ln();
        }
    }
}

/// Weight each node key accumulates from the personas that contribute it.
pub(crate) fn contributed_weights(
    graphs: &[&PersonaGraph],
    key_of: &BTreeMap<(usize, crate::graph::NodeId), NodeKey>,
    max_contribution: usize,
) -> BTreeMap<NodeKey, f64> {
    let mut weights: BTreeMap<NodeKey, f64> = BTreeMap::new();
    for (gi, g) in graphs.iter().enumerate() {
        let adj = undirected_adjacency(*g);
        let mut degree: BTreeMap<&NodeKey, usize> = BTreeMap::new();
        for (id, nbrs) in &adj {
            let key = &key_of[&(gi, id.clone())];
            let d = degree.entry(key).or_default();
            *d = (*d).max(nbrs.len());
        }
        let mut ranked: Vec<(&NodeKey, usize)> = degree.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0 .1.cmp(&b.0 .1)).then_with(|| a.0 .0.cmp(&b.0 .0)));
        ranked.truncate(max_contribution);
        let share = 1.0 / ranked.len().max(1) as f64;
        for (key, _) in ranked {
            *weights.entry(key.clone()).or_default() += share;
        }
    }
    weights
}

/// Unigraph restricted to node keys released by the DP set union.
///
/// With `epsilon = ∞` this is exactly [`super::merge`].
pub fn dp_prune(
    graphs: &[PersonaGraph],
    eq: &dyn EquivalenceProvider,
    params: DpParams,
    seed: u64,
) -> Result<Unigraph, MergeError> {
    params.check()?;
    let clustering = cluster(graphs, eq)?;
    if params.epsilon.is_infinite() {
        return Ok(assemble(&clustering, |_| true, true));
    }

    let weights = contributed_weights(&clustering.graphs, &clustering.key_of, params.max_contribution);
    let threshold = params.threshold();
    let scale = 1.0 / params.epsilon;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let released: BTreeSet<NodeKey> = weights
        .iter()
        .filter(|(_, w)| **w + scale * laplace_unit(&mut rng) > threshold)
        .map(|(k, _)| k.clone())
        .collect();

    let mut u = assemble(&clustering, |k| released.contains(k), false);
    u.dp_meta = super::DpMeta {
        applied: true,
        epsilon: Some(params.epsilon),
        delta: Some(params.delta),
        max_contribution: Some(params.max_contribution),
        candidate_keys: Some(weights.len()),
        released_keys: Some(released.len()),
    };
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, Node, NodeKind, Role};
    use crate::unify::{merge, ExactCanonical};

    fn hub_persona(id: &str, extra: usize) -> PersonaGraph {
        let mut g = PersonaGraph::new(id);
        g.add_node(Node::new("dad", NodeKind::Subject, "my father"));
        for i in 0..extra {
            let f = format!("f{i}");
            g.add_node(Node::new(f.as_str(), NodeKind::Factual, format!("{id} event {i}")));
            g.add_edge(Edge::role(f.as_str(), "dad", Role::Recipient));
        }
        g
    }

    #[test]
    fn parameter_checks() {
        let bad = [DpParams::new(0.0, 1e-6, 1), DpParams::new(1.0, 0.0, 1), DpParams::new(1.0, 1.0, 1), DpParams::new(1.0, 0.5, 0), DpParams::new(f64::NAN, 0.5, 1)];
        for p in bad {
            assert!(matches!(dp_prune(&[hub_persona("a", 1)], &ExactCanonical, p, 0), Err(MergeError::InvalidParams(_))));
        }
    }

    #[test]
    fn threshold_value() {
        let p = DpParams::new(1.0, 1e-6, 10);
        assert!((p.threshold() - (1.0 + (5e5f64).ln())).abs() < 1e-12);
        assert!((p.threshold() - 14.122).abs() < 1e-3);
    }

    #[test]
    fn infinite_epsilon_is_plain_merge() {
        let graphs: Vec<_> = (0..5).map(|i| hub_persona(&format!("p{i}"), 3)).collect();
        let dp = dp_prune(&graphs, &ExactCanonical, DpParams::new(f64::INFINITY, 1e-6, 2), 9).unwrap();
        assert_eq!(dp, merge(&graphs, &ExactCanonical).unwrap());
    }

    #[test]
    fn laplace_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| laplace_unit(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "{mean}");
        assert!((var - 2.0).abs() < 0.05, "{var}");
        // P(X > 3) = e^-3 / 2
        let tail = xs.iter().filter(|x| **x > 3.0).count() as f64 / n as f64;
        assert!((tail - 0.5 * (-3.0f64).exp()).abs() < 0.003);
    }

    #[test]
    fn weights_follow_degree_ranking() {
        let graphs = [hub_persona("a", 3)];
        let c = cluster(&graphs, &ExactCanonical).unwrap();
        let w = contributed_weights(&c.graphs, &c.key_of, 1);
        assert_eq!(w.len(), 1);
        assert_eq!(w[&(NodeKind::Subject, "my father".to_string())], 1.0);
        let w = contributed_weights(&c.graphs, &c.key_of, 10);
        assert_eq!(w.len(), 4);
        assert!(w.values().all(|v| (*v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn unanimous_key_released_single_source_pruned() {
        // Thirty single-node personas: each contributes its only key with weight 1.
        let graphs: Vec<_> = (0..30).map(|i| hub_persona(&format!("p{i:02}"), 0)).collect();
        // One persona with fifty keys, each weight 0.02.
        let mut lone = PersonaGraph::new("lone");
        for i in 0..50 {
            lone.add_node(Node::new(format!("n{i}").as_str(), NodeKind::Interpretive, format!("private theme {i}")));
        }
        let params = DpParams::new(1.0, 1e-6, 100);
        let mut released = 0;
        let mut pruned = 0;
        for seed in 0..200 {
            let u = dp_prune(&graphs, &ExactCanonical, params, seed).unwrap();
            released += usize::from(u.nodes.len() == 1);
            let v = dp_prune(std::slice::from_ref(&lone), &ExactCanonical, params, seed).unwrap();
            pruned += usize::from(v.nodes.is_empty());
            assert!(u.dp_meta.applied);
        }
        assert!(released >= 198, "{released}");
        assert_eq!(pruned, 200);
    }
}
