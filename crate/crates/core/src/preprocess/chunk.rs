use serde::{Deserialize, Serialize};

use super::sentences::SentenceList;
use super::vocab::{Vocabulary, PAD_ID};
use super::PreprocessError;

/// Fixed-length token ids plus attention mask for one group of sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenChunk {
    pub token_ids: Vec<u32>,
    pub mask: Vec<u8>,
    /// Half-open range of sentence indices packed into this chunk.
    pub source_sentence_range: (usize, usize),
}

impl TokenChunk {
    /// Pads (or truncates) `ids` to `len`.
    pub fn from_ids(ids: &[u32], len: usize, range: (usize, usize)) -> Self {
        let used = ids.len().min(len);
        let mut token_ids = vec![PAD_ID; len];
        token_ids[..used].copy_from_slice(&ids[..used]);
        let mut mask = vec![0u8; len];
        mask[..used].fill(1);
        Self { token_ids, mask, source_sentence_range: range }
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Number of unmasked positions (the mask is a prefix of ones).
    pub fn valid_len(&self) -> usize {
        self.mask.iter().take_while(|&&m| m == 1).count()
    }

    /// Checks length, prefix-mask and padding invariants.
    pub fn validate(&self, len: usize) -> Result<(), PreprocessError> {
        if self.token_ids.len() != len || self.mask.len() != len {
            return Err(PreprocessError::InvalidChunk(format!(
                "expected length {len}, got ids={} mask={}",
                self.token_ids.len(),
                self.mask.len()
            )));
        }
        let valid = self.valid_len();
        if self.mask[valid..].iter().any(|&m| m != 0) {
            return Err(PreprocessError::InvalidChunk("mask is not a prefix".into()));
        }
        if self.token_ids[valid..].iter().any(|&t| t != PAD_ID) {
            return Err(PreprocessError::InvalidChunk("masked position carries a token".into()));
        }
        Ok(())
    }
}

/// Greedily packs consecutive sentences into chunks of at most `chunk_len`
/// tokens. A sentence longer than `chunk_len` becomes its own truncated chunk.
pub fn chunk_and_tokenize(
    sentences: &SentenceList,
    vocab: &Vocabulary,
    chunk_len: usize,
) -> Result<Vec<TokenChunk>, PreprocessError> {
    if chunk_len < 2 {
        return Err(PreprocessError::ChunkLength(chunk_len));
    }
    let encoded: Vec<Vec<u32>> = sentences.iter().map(|s| vocab.encode(s)).collect();
    Ok(pack(&encoded, chunk_len))
}

pub(crate) fn pack(encoded: &[Vec<u32>], chunk_len: usize) -> Vec<TokenChunk> {
    let mut chunks = Vec::new();
    let mut buf: Vec<u32> = Vec::with_capacity(chunk_len);
    let mut start = 0;
    for (i, ids) in encoded.iter().enumerate() {
        if !buf.is_empty() && buf.len() + ids.len() > chunk_len {
            chunks.push(TokenChunk::from_ids(&buf, chunk_len, (start, i)));
            buf.clear();
            start = i;
        }
        buf.extend_from_slice(ids);
        if buf.len() >= chunk_len {
            chunks.push(TokenChunk::from_ids(&buf, chunk_len, (start, i + 1)));
            buf.clear();
            start = i + 1;
        }
    }
    if start < encoded.len() {
        chunks.push(TokenChunk::from_ids(&buf, chunk_len, (start, encoded.len())));
    }
    chunks
}
