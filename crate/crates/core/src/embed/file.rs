//! Precomputed embeddings stored as one JSON header line followed by
//! little-endian `f32` payloads.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{finish_dense, ChunkRef, EmbedError, EmbeddingProvider, EmbeddingTensor, ProviderKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub note_id: String,
    pub chunk_idx: usize,
    /// Offset into the payload, in `f32` elements.
    pub offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dim: usize,
    chunk_len: usize,
    entries: Vec<FileEntry>,
}

/// Writes `(note_id, chunk_idx, dense L×D matrix)` triples.
pub fn write_embedding_file(
    path: impl AsRef<Path>,
    dim: usize,
    chunk_len: usize,
    tensors: &[(String, usize, Vec<f32>)],
) -> Result<(), EmbedError> {
    let block = dim * chunk_len;
    let mut entries = Vec::with_capacity(tensors.len());
    for (i, (note_id, chunk_idx, values)) in tensors.iter().enumerate() {
        if values.len() != block {
            return Err(EmbedError::Shape(format!("entry {i}: {} values, expected {block}", values.len())));
        }
        entries.push(FileEntry { note_id: note_id.clone(), chunk_idx: *chunk_idx, offset: i * block });
    }
    let header = Header { dim, chunk_len, entries };
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut w, &header).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    for (_, _, values) in tensors {
        for v in values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Looks chunks up by `(note_id, chunk_idx)` in a file loaded into memory.
#[derive(Debug)]
pub struct FileProvider {
    dim: usize,
    chunk_len: usize,
    index: HashMap<(String, usize), usize>,
    payload: Vec<f32>,
}

impl FileProvider {
    pub fn open(path: impl AsRef<Path>, expected_dim: usize) -> Result<Self, EmbedError> {
        let bytes = std::fs::read(path)?;
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| EmbedError::File("missing header line".into()))?;
        let header: Header =
            serde_json::from_slice(&bytes[..nl]).map_err(|e| EmbedError::File(e.to_string()))?;
        if header.dim != expected_dim {
            return Err(EmbedError::Shape(format!("file dim {} != configured {expected_dim}", header.dim)));
        }
        let raw = &bytes[nl + 1..];
        if raw.len() % 4 != 0 {
            return Err(EmbedError::File("payload is not a whole number of f32 values".into()));
        }
        let payload: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let block = header.dim * header.chunk_len;
        let mut index = HashMap::with_capacity(header.entries.len());
        for e in header.entries {
            if e.offset + block > payload.len() {
                return Err(EmbedError::File(format!("entry {}#{} runs past payload", e.note_id, e.chunk_idx)));
            }
            index.insert((e.note_id, e.chunk_idx), e.offset);
        }
        Ok(Self { dim: header.dim, chunk_len: header.chunk_len, index, payload })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
}

impl EmbeddingProvider for FileProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::File
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, chunks: &[ChunkRef<'_>]) -> Result<Vec<EmbeddingTensor>, EmbedError> {
        let block = self.dim * self.chunk_len;
        chunks
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let at = |source| EmbedError::AtIndex { index: i, source: Box::new(source) };
                if c.chunk.len() != self.chunk_len {
                    return Err(at(EmbedError::Shape(format!(
                        "chunk length {} != stored {}",
                        c.chunk.len(),
                        self.chunk_len
                    ))));
                }
                let offset = *self
                    .index
                    .get(&(c.note_id.to_owned(), c.chunk_idx))
                    .ok_or_else(|| at(EmbedError::MissingEmbedding {
                        note_id: c.note_id.to_owned(),
                        chunk_idx: c.chunk_idx,
                    }))?;
                let dense: Vec<f64> =
                    self.payload[offset..offset + block].iter().map(|&v| f64::from(v)).collect();
                finish_dense(&dense, self.dim, c.chunk, i).map_err(at)
            })
            .collect()
    }
}
