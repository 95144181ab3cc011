//! HTTP client for an external encoder speaking the `/v1/embed` protocol.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{finish_dense, ChunkRef, EmbedError, EmbeddingProvider, EmbeddingTensor, ProviderConfig, ProviderKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub model: String,
    pub chunks: Vec<Vec<u32>>,
    pub masks: Vec<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub texts: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub dim: usize,
    pub embeddings: Vec<Vec<Vec<f64>>>,
}

/// Counting gate bounding concurrent requests.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn acquire(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

enum Attempt {
    Retry(String),
    Fatal(EmbedError),
}

#[derive(Debug)]
pub struct RemoteProvider {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    dim: usize,
    max_retries: usize,
    max_batch: usize,
    gate: Gate,
}

impl RemoteProvider {
    pub fn new(cfg: &ProviderConfig) -> Result<Self, EmbedError> {
        cfg.validate()?;
        let base = cfg.endpoint.as_deref().unwrap_or_default().trim_end_matches('/');
        let url = if base.ends_with("/v1/embed") { base.to_owned() } else { format!("{base}/v1/embed") };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .pool_max_idle_per_host(cfg.max_in_flight)
            .build()
            .map_err(|e| EmbedError::Config(e.to_string()))?;
        Ok(Self {
            client,
            url,
            model: cfg.model.clone(),
            dim: cfg.dim,
            max_retries: cfg.max_retries,
            max_batch: cfg.max_batch,
            gate: Gate { free: Mutex::new(cfg.max_in_flight), cv: Condvar::new() },
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn attempt(&self, body: &[u8]) -> Result<EmbedResponse, Attempt> {
        let _slot = self.gate.acquire();
        let resp = self
            .client
            .post(&self.url)
            .header("content-type", "application/json")
            .body(body.to_vec())
            .send()
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        let bytes = resp.bytes().map_err(|e| Attempt::Retry(e.to_string()))?;
        if status.is_server_error() {
            return Err(Attempt::Retry(format!("HTTP {}", status.as_u16())));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(EmbedError::Rejected {
                status: status.as_u16(),
                body: String::from_utf8_lossy(&bytes).chars().take(200).collect(),
            }));
        }
        serde_json::from_slice(&bytes)
            .map_err(|e| Attempt::Fatal(EmbedError::Shape(format!("undecodable response: {e}"))))
    }

    fn request(&self, chunks: &[ChunkRef<'_>], first_index: usize) -> Result<Vec<EmbeddingTensor>, EmbedError> {
        let texts: Option<Vec<String>> =
            chunks.iter().map(|c| c.text.map(str::to_owned)).collect::<Option<Vec<_>>>();
        let req = EmbedRequest {
            model: self.model.clone(),
            chunks: chunks.iter().map(|c| c.chunk.token_ids.clone()).collect(),
            masks: chunks.iter().map(|c| c.chunk.mask.clone()).collect(),
            texts,
        };
        let body = serde_json::to_vec(&req).map_err(|e| EmbedError::Shape(e.to_string()))?;
        let mut last = String::new();
        for attempt in 0..=self.max_retries {
            match self.attempt(&body) {
                Ok(resp) => return self.decode(resp, chunks, first_index),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(reason)) => {
                    log::warn!("embed request attempt {} failed: {reason}", attempt + 1);
                    last = reason;
                }
            }
        }
        Err(EmbedError::ProviderUnavailable { attempts: self.max_retries + 1, reason: last })
    }

    fn decode(
        &self,
        resp: EmbedResponse,
        chunks: &[ChunkRef<'_>],
        first_index: usize,
    ) -> Result<Vec<EmbeddingTensor>, EmbedError> {
        if resp.dim != self.dim {
            return Err(EmbedError::Shape(format!("remote dim {} != configured {}", resp.dim, self.dim)));
        }
        if resp.embeddings.len() != chunks.len() {
            return Err(EmbedError::Shape(format!(
                "{} embeddings for {} chunks",
                resp.embeddings.len(),
                chunks.len()
            )));
        }
        resp.embeddings
            .iter()
            .zip(chunks)
            .enumerate()
            .map(|(k, (rows, c))| {
                let index = first_index + k;
                let at = |source| EmbedError::AtIndex { index, source: Box::new(source) };
                if rows.len() != c.chunk.len() || rows.iter().any(|r| r.len() != self.dim) {
                    return Err(at(EmbedError::Shape(format!(
                        "expected {}×{} matrix",
                        c.chunk.len(),
                        self.dim
                    ))));
                }
                let dense: Vec<f64> = rows.iter().flatten().copied().collect();
                finish_dense(&dense, self.dim, c.chunk, index).map_err(at)
            })
            .collect()
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Remote
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, chunks: &[ChunkRef<'_>]) -> Result<Vec<EmbeddingTensor>, EmbedError> {
        let mut out = Vec::with_capacity(chunks.len());
        for (b, group) in chunks.chunks(self.max_batch).enumerate() {
            out.extend(self.request(group, b * self.max_batch)?);
        }
        Ok(out)
    }
}
