//! Chunk embeddings through interchangeable providers.
//!
//! Every provider returns an `L × D` [`EmbeddingTensor`] per chunk whose rows
//! are zero wherever the chunk mask is zero. The model only ever sees the
//! tensor, so swapping providers never changes model code paths.

mod file;
mod hashed;
mod remote;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::TokenChunk;

pub use file::{write_embedding_file, FileEntry, FileProvider};
pub use hashed::{hashed_row, HashedProvider};
pub use remote::{EmbedRequest, EmbedResponse, RemoteProvider};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("no stored embedding for note {note_id:?} chunk {chunk_idx}")]
    MissingEmbedding { note_id: String, chunk_idx: usize },
    #[error("embedding provider unavailable after {attempts} attempt(s): {reason}")]
    ProviderUnavailable { attempts: usize, reason: String },
    #[error("embedding request rejected with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite embedding value in chunk {0}")]
    NonFinite(usize),
    #[error("chunk {index}: {source}")]
    AtIndex { index: usize, source: Box<EmbedError> },
    #[error("invalid provider config: {0}")]
    Config(String),
    #[error("malformed embedding file: {0}")]
    File(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `L × D` embedding of one chunk.
///
/// Only the unmasked prefix rows are stored; rows at or past `valid_rows`
/// are zero by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTensor {
    len: usize,
    dim: usize,
    valid: usize,
    values: Vec<f64>,
}

impl EmbeddingTensor {
    pub fn zeros(len: usize, dim: usize) -> Self {
        Self { len, dim, valid: 0, values: Vec::new() }
    }

    /// Builds from the first `valid` rows (row-major, `valid × dim` values).
    pub fn from_prefix(len: usize, dim: usize, valid: usize, values: Vec<f64>) -> Result<Self, EmbedError> {
        if valid > len || values.len() != valid * dim {
            return Err(EmbedError::Shape(format!(
                "{} values for {valid} rows of width {dim} (len {len})",
                values.len()
            )));
        }
        Ok(Self { len, dim, valid, values })
    }

    /// Builds from a dense `len × dim` matrix, zeroing every row the mask
    /// switches off.
    pub fn from_dense(dense: &[f64], dim: usize, mask: &[u8]) -> Result<Self, EmbedError> {
        let len = mask.len();
        if dense.len() != len * dim {
            return Err(EmbedError::Shape(format!("expected {}×{dim}, got {} values", len, dense.len())));
        }
        let valid = mask.iter().take_while(|&&m| m == 1).count();
        Ok(Self { len, dim, valid, values: dense[..valid * dim].to_vec() })
    }

    /// Chunk length `L`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Embedding width `D`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of leading rows that may be nonzero.
    pub fn valid_rows(&self) -> usize {
        self.valid
    }

    /// Stored prefix rows, `valid_rows × dim` row-major.
    pub fn prefix(&self) -> &[f64] {
        &self.values
    }

    /// Row `i`, or `None` when it is a masked (all-zero) row.
    pub fn row(&self, i: usize) -> Option<&[f64]> {
        (i < self.valid).then(|| &self.values[i * self.dim..(i + 1) * self.dim])
    }

    pub fn get(&self, i: usize, d: usize) -> f64 {
        self.row(i).map_or(0.0, |r| r[d])
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len * self.dim];
        out[..self.values.len()].copy_from_slice(&self.values);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// A chunk plus the identity a provider may need to look it up.
#[derive(Debug, Clone, Copy)]
pub struct ChunkRef<'a> {
    pub note_id: &'a str,
    pub chunk_idx: usize,
    pub chunk: &'a TokenChunk,
    /// Raw chunk text, forwarded to remote encoders that tokenize themselves.
    pub text: Option<&'a str>,
}

impl<'a> ChunkRef<'a> {
    pub fn new(note_id: &'a str, chunk_idx: usize, chunk: &'a TokenChunk) -> Self {
        Self { note_id, chunk_idx, chunk, text: None }
    }

    pub fn with_text(mut self, text: &'a str) -> Self {
        self.text = Some(text);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Hashed,
    File,
    Remote,
}

impl std::fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProviderKind::Hashed => "hashed",
            ProviderKind::File => "file",
            ProviderKind::Remote => "remote",
        })
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn kind(&self) -> ProviderKind;

    fn dim(&self) -> usize;

    /// Embeds every chunk; the first failure is returned with its index.
    fn embed_batch(&self, chunks: &[ChunkRef<'_>]) -> Result<Vec<EmbeddingTensor>, EmbedError>;

    fn embed_chunk(&self, chunk: ChunkRef<'_>) -> Result<EmbeddingTensor, EmbedError> {
        let mut out = self.embed_batch(&[chunk])?;
        Ok(out.pop().expect("one tensor per chunk"))
    }
}

/// Provider settings; which fields matter depends on `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub dim: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
    #[serde(default = "default_max_batch")]
    pub max_batch: usize,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_model() -> String {
    "clinical-encoder".into()
}
fn default_timeout_ms() -> u64 {
    10_000
}
fn default_retries() -> usize {
    2
}
fn default_max_batch() -> usize {
    16
}
fn default_in_flight() -> usize {
    4
}

/// Default width of the hashed provider.
pub const HASHED_DEFAULT_DIM: usize = 128;
/// Width of a base-size clinical transformer encoder.
pub const ENCODER_DEFAULT_DIM: usize = 768;

impl ProviderConfig {
    pub fn hashed(dim: usize, seed: u64) -> Self {
        Self {
            kind: ProviderKind::Hashed,
            dim,
            seed,
            path: None,
            endpoint: None,
            model: default_model(),
            timeout_ms: default_timeout_ms(),
            max_retries: default_retries(),
            max_batch: default_max_batch(),
            max_in_flight: default_in_flight(),
        }
    }

    pub fn file(dim: usize, path: impl Into<PathBuf>) -> Self {
        Self { kind: ProviderKind::File, path: Some(path.into()), ..Self::hashed(dim, 0) }
    }

    pub fn remote(dim: usize, endpoint: impl Into<String>) -> Self {
        Self { kind: ProviderKind::Remote, endpoint: Some(endpoint.into()), ..Self::hashed(dim, 0) }
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim == 0 {
            return Err(EmbedError::Config("dim must be > 0".into()));
        }
        match self.kind {
            ProviderKind::Hashed => Ok(()),
            ProviderKind::File if self.path.is_none() => Err(EmbedError::Config("file provider needs a path".into())),
            ProviderKind::File => Ok(()),
            ProviderKind::Remote => {
                if self.endpoint.is_none() {
                    return Err(EmbedError::Config("remote provider needs an endpoint".into()));
                }
                if self.timeout_ms == 0 || self.max_batch == 0 || self.max_in_flight == 0 {
                    return Err(EmbedError::Config("timeout, max_batch and max_in_flight must be > 0".into()));
                }
                Ok(())
            }
        }
    }

    pub fn build(&self) -> Result<Arc<dyn EmbeddingProvider>, EmbedError> {
        self.validate()?;
        Ok(match self.kind {
            ProviderKind::Hashed => Arc::new(HashedProvider::new(self.dim, self.seed)),
            ProviderKind::File => Arc::new(FileProvider::open(self.path.as_ref().unwrap(), self.dim)?),
            ProviderKind::Remote => Arc::new(RemoteProvider::new(self)?),
        })
    }
}

/// Embeds one chunk with a provider built from `cfg`.
pub fn embed_chunk(chunk: ChunkRef<'_>, cfg: &ProviderConfig) -> Result<EmbeddingTensor, EmbedError> {
    cfg.build()?.embed_chunk(chunk)
}

/// Embeds chunks with a provider built from `cfg`.
pub fn embed_batch(chunks: &[ChunkRef<'_>], cfg: &ProviderConfig) -> Result<Vec<EmbeddingTensor>, EmbedError> {
    cfg.build()?.embed_batch(chunks)
}

/// Zeroes masked rows, checks width and finiteness.
pub(crate) fn finish_dense(
    dense: &[f64],
    dim: usize,
    chunk: &TokenChunk,
    index: usize,
) -> Result<EmbeddingTensor, EmbedError> {
    let t = EmbeddingTensor::from_dense(dense, dim, &chunk.mask)?;
    if !t.is_finite() {
        return Err(EmbedError::NonFinite(index));
    }
    Ok(t)
}
