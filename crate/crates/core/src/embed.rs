//! Text embeddings used for semantic merging and thematic anchoring.

use sha2::{Digest, Sha256};

/// Maps text to a unit vector (or the zero vector for text with no tokens).
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Vec<f64>;
}

impl<F> Embedder for F
where
    F: Fn(&str) -> Vec<f64> + Send + Sync,
{
    fn embed(&self, text: &str) -> Vec<f64> {
        self(text)
    }
}

/// Deterministic bag-of-words embedding: each lower-cased alphanumeric token
/// is hashed to a signed bucket, and the bucket counts are L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenHashEmbedder {
    pub dim: usize,
}

impl Default for TokenHashEmbedder {
    fn default() -> Self {
        TokenHashEmbedder { dim: 256 }
    }
}

impl TokenHashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        TokenHashEmbedder { dim }
    }
}

pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

impl Embedder for TokenHashEmbedder {
    fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for token in tokens(text) {
            let d = Sha256::digest(token.as_bytes());
            let h = u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"));
            let bucket = (h % self.dim as u64) as usize;
            let sign = if d[8] & 1 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        normalize(&mut v);
        v
    }
}

pub fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_norm_and_case_insensitive() {
        let e = TokenHashEmbedder::default();
        let a = e.embed("Economic insecurity driving academic achievement");
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        let b = e.embed("economic   INSECURITY, driving academic achievement!");
        assert!((cosine(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_text_is_zero() {
        let e = TokenHashEmbedder::default();
        assert!(e.embed("  ,, ").iter().all(|x| *x == 0.0));
        assert_eq!(cosine(&e.embed(""), &e.embed("x")), 0.0);
    }

    #[test]
    fn shared_words_raise_similarity() {
        let e = TokenHashEmbedder::new(1024);
        let anchor = e.embed("family duty shaping career");
        let near = e.embed("family duty at home");
        let far = e.embed("learned to paint landscapes");
        assert!(cosine(&anchor, &near) > cosine(&anchor, &far));
    }

    #[test]
    fn closures_are_embedders() {
        let f = |_: &str| vec![1.0, 0.0];
        assert_eq!(Embedder::embed(&f, "x"), vec![1.0, 0.0]);
    }
}
