use crate::{Embedder, EmbeddingVector, LlmError};
use sha2::{Digest, Sha256};

pub const HASHING_DIM: usize = 256;
pub const HASHING_SEED: u64 = 0x5ca1_ab1e;

/// Offline bag-of-words embedding. Text is lowercased and split on
/// non-alphanumeric characters; each token adds ±1 to one of `dim` buckets,
/// bucket and sign both taken from sha256(seed || token). Word order does
/// not matter, so token-equal texts embed identically.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
    seed: u64,
    model_id: String,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(HASHING_DIM, HASHING_SEED)
    }
}

impl HashingEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            dim,
            seed,
            model_id: format!("hashing-bow-{dim}-{seed:x}"),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn bucket(&self, token: &str) -> (usize, f64) {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(token.as_bytes());
        let bytes = h.finalize();
        let word = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"));
        let sign = if bytes[8] & 1 == 0 { 1.0 } else { -1.0 };
        ((word % self.dim as u64) as usize, sign)
    }
}

pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

impl Embedder for HashingEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, LlmError> {
        if text.trim().is_empty() {
            return Err(LlmError::Precondition("cannot embed empty text".into()));
        }
        let mut values = vec![0.0; self.dim];
        for token in tokenize(text) {
            let (i, sign) = self.bucket(&token);
            values[i] += sign;
        }
        Ok(EmbeddingVector {
            values,
            model_id: self.model_id.clone(),
        })
    }
}
