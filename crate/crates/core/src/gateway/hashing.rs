use super::{Embedder, EmbeddingVector, GatewayError};
use crate::text::tokenize;

/// Offline embedder: signed feature hashing of token counts into a fixed
/// number of buckets, then L2 normalization.
///
/// Identical texts always map to identical vectors, and any two texts with
/// the same token multiset do too.
#[derive(Clone, Debug)]
pub struct HashingEmbedder {
    dimension: usize,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

impl HashingEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }

    pub fn embed_one(&self, text: &str) -> EmbeddingVector {
        let mut values = vec![0.0; self.dimension];
        let mut tokens = tokenize(text);
        if tokens.is_empty() {
            // Texts without alphanumerics still need a unit vector.
            tokens.push(text.trim().to_string());
        }
        for token in &tokens {
            let h = fnv1a(token.as_bytes());
            let bucket = (h % self.dimension as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            values[bucket] += sign;
        }
        let vector = EmbeddingVector { values };
        if vector.norm() == 0.0 {
            // Signed collisions cancelled out; fall back to the first bucket.
            let mut values = vec![0.0; self.dimension];
            values[(fnv1a(text.as_bytes()) % self.dimension as u64) as usize] = 1.0;
            return EmbeddingVector { values };
        }
        vector.normalized()
    }
}

impl Embedder for HashingEmbedder {
    fn name(&self) -> String {
        format!("hashing-{}", self.dimension)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }

    fn is_local(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_word_vector_has_unit_norm() {
        let v = HashingEmbedder::new(64).embed_one("cat");
        let norm = v.values.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() <= 1e-9);
        assert_eq!(v.dimension(), 64);
    }

    #[test]
    fn punctuation_only_text_still_embeds() {
        let e = HashingEmbedder::new(32);
        assert!((e.embed_one("—").norm() - 1.0).abs() < 1e-12);
        assert!((e.embed_one("").norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn token_order_does_not_matter() {
        let e = HashingEmbedder::new(128);
        assert_eq!(e.embed_one("revenue table"), e.embed_one("Table, revenue"));
        assert_ne!(e.embed_one("revenue table"), e.embed_one("references appendix"));
    }
}
