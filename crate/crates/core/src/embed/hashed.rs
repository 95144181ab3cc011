use super::{ChunkRef, EmbedError, EmbeddingProvider, EmbeddingTensor, ProviderKind};
use crate::util;

/// Deterministic embeddings: each token id maps to a fixed unit vector drawn
/// from a seeded 64-bit hash of `(token_id, dimension)`.
#[derive(Debug, Clone)]
pub struct HashedProvider {
    dim: usize,
    seed: u64,
}

impl HashedProvider {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }
}

/// Unit-norm row for `token_id`, written into `out` (length = width).
pub fn hashed_row(token_id: u32, seed: u64, out: &mut [f64]) {
    let base = util::mix(&[seed, u64::from(token_id)]);
    let mut norm = 0.0;
    for (d, v) in out.iter_mut().enumerate() {
        let h = util::splitmix64(base ^ util::splitmix64(d as u64));
        *v = 2.0 * util::unit_interval(h) - 1.0;
        norm += *v * *v;
    }
    let norm = norm.sqrt();
    if norm > 0.0 {
        out.iter_mut().for_each(|v| *v /= norm);
    }
}

impl EmbeddingProvider for HashedProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Hashed
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, chunks: &[ChunkRef<'_>]) -> Result<Vec<EmbeddingTensor>, EmbedError> {
        Ok(chunks
            .iter()
            .map(|c| {
                let valid = c.chunk.valid_len();
                let mut values = vec![0.0; valid * self.dim];
                for (row, &tok) in values.chunks_exact_mut(self.dim).zip(&c.chunk.token_ids) {
                    hashed_row(tok, self.seed, row);
                }
                EmbeddingTensor::from_prefix(c.chunk.len(), self.dim, valid, values)
                    .expect("prefix shape is consistent")
            })
            .collect())
    }
}
