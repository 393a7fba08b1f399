use std::collections::HashMap;
use std::sync::RwLock;

use crate::embed::{cosine, Embedder, TokenHashEmbedder};
use crate::graph::{canonical_label, NodeKind};

/// Decides whether two labels of the same node kind denote the same thing.
///
/// Implementations must be reflexive and symmetric and must treat labels with
/// equal canonical form as equivalent. Transitivity is not required; merging
/// closes the relation with union-find.
pub trait EquivalenceProvider: Send + Sync {
    fn equivalent(&self, a: &str, b: &str, kind: NodeKind) -> bool;

    /// True when only canonical-form equality counts, letting merging skip
    /// pairwise comparison.
    fn canonical_only(&self) -> bool {
        false
    }
}

/// Equality after trimming, whitespace collapsing and case folding.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactCanonical;

impl EquivalenceProvider for ExactCanonical {
    fn equivalent(&self, a: &str, b: &str, _kind: NodeKind) -> bool {
        canonical_label(a) == canonical_label(b)
    }

    fn canonical_only(&self) -> bool {
        true
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("cosine threshold must lie in (0, 1], got {0}")]
pub struct InvalidThreshold(pub f64);

/// Labels are equivalent when the cosine similarity of their embeddings is at
/// least `tau`. Embeddings are cached per canonical label.
pub struct EmbeddingThreshold<E = TokenHashEmbedder> {
    embedder: E,
    tau: f64,
    cache: RwLock<HashMap<String, Vec<f64>>>,
}

impl<E: Embedder> EmbeddingThreshold<E> {
    pub fn new(embedder: E, tau: f64) -> Result<Self, InvalidThreshold> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(InvalidThreshold(tau));
        }
        Ok(EmbeddingThreshold { embedder, tau, cache: RwLock::new(HashMap::new()) })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    fn vector(&self, canonical: &str) -> Vec<f64> {
        if let Some(v) = self.cache.read().expect("cache lock").get(canonical) {
            return v.clone();
        }
        let v = self.embedder.embed(canonical);
        self.cache.write().expect("cache lock").insert(canonical.to_string(), v.clone());
        v
    }
}

impl<E: Embedder> EquivalenceProvider for EmbeddingThreshold<E> {
    fn equivalent(&self, a: &str, b: &str, _kind: NodeKind) -> bool {
        let (ca, cb) = (canonical_label(a), canonical_label(b));
        if ca == cb {
            return true;
        }
        cosine(&self.vector(&ca), &self.vector(&cb)) >= self.tau
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_canonical_folds() {
        assert!(ExactCanonical.equivalent("My Father", "my  father", NodeKind::Subject));
        assert!(!ExactCanonical.equivalent("my father", "my mother", NodeKind::Subject));
    }

    #[test]
    fn embedding_threshold_bounds() {
        assert!(EmbeddingThreshold::new(TokenHashEmbedder::default(), 0.0).is_err());
        assert!(EmbeddingThreshold::new(TokenHashEmbedder::default(), 1.5).is_err());
        let eq = EmbeddingThreshold::new(TokenHashEmbedder::default(), 1.0).unwrap();
        assert!(eq.equivalent("Father", "father", NodeKind::Subject));
        assert!(eq.equivalent("the father", "father the", NodeKind::Subject));
        assert!(!eq.equivalent("father", "mother", NodeKind::Subject));
    }

    #[test]
    fn embedding_threshold_symmetric() {
        let eq = EmbeddingThreshold::new(TokenHashEmbedder::default(), 0.6).unwrap();
        let labels = ["my father", "my late father", "father", "a tennis match", "my mother"];
        for a in labels {
            for b in labels {
                assert_eq!(
                    eq.equivalent(a, b, NodeKind::Subject),
                    eq.equivalent(b, a, NodeKind::Subject)
                );
            }
        }
    }
}
