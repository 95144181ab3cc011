//! Checkpoint container: one JSON header line, then the tensors as
//! little-endian `f32` values in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NetSpec, NnError, ParamSet, Tensor};
use crate::util::sha256_hex;

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "chartcode-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub spec: NetSpec,
    pub tensors: Vec<TensorEntry>,
    pub seed: u64,
    #[serde(default)]
    pub metrics: serde_json::Value,
    pub payload_bytes: usize,
    pub payload_sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: NetSpec,
    pub params: ParamSet,
    pub seed: u64,
    pub metrics: serde_json::Value,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>, NnError> {
        self.params.check_layout(&self.spec)?;
        let mut payload = Vec::with_capacity(self.params.n_scalars() * 4);
        for t in self.params.tensors() {
            for &v in &t.data {
                payload.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        let header = CheckpointHeader {
            format: FORMAT.into(),
            version: CHECKPOINT_VERSION,
            spec: self.spec.clone(),
            tensors: self
                .params
                .tensors()
                .iter()
                .map(|t| TensorEntry { name: t.name.clone(), shape: t.shape.clone() })
                .collect(),
            seed: self.seed,
            metrics: self.metrics.clone(),
            payload_bytes: payload.len(),
            payload_sha256: sha256_hex(&payload),
        };
        let mut out = serde_json::to_vec(&header).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        out.push(b'\n');
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| NnError::Checkpoint("missing header line".into()))?;
        let header: CheckpointHeader = serde_json::from_slice(&bytes[..nl])
            .map_err(|e| NnError::Checkpoint(format!("unreadable header: {e}")))?;
        if header.format != FORMAT {
            return Err(NnError::Checkpoint(format!("unknown format {:?}", header.format)));
        }
        if header.version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!(
                "version {} is not supported (expected {CHECKPOINT_VERSION})",
                header.version
            )));
        }
        let payload = &bytes[nl + 1..];
        if payload.len() != header.payload_bytes || sha256_hex(payload) != header.payload_sha256 {
            return Err(NnError::Checkpoint("payload checksum mismatch (file truncated or corrupted)".into()));
        }
        let mut values = payload.chunks_exact(4).map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])));
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in &header.tensors {
            let n: usize = e.shape.iter().product();
            let data: Vec<f64> = values.by_ref().take(n).collect();
            if data.len() != n {
                return Err(NnError::Checkpoint(format!("payload too short for {}", e.name)));
            }
            tensors.push(Tensor { name: e.name.clone(), shape: e.shape.clone(), data });
        }
        if values.next().is_some() {
            return Err(NnError::Checkpoint("payload longer than declared tensors".into()));
        }
        let params = ParamSet::from_tensors(tensors);
        params.check_layout(&header.spec)?;
        Ok(Self { spec: header.spec, params, seed: header.seed, metrics: header.metrics })
    }
}

pub fn write_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<(), NnError> {
    std::fs::write(path, ckpt.to_bytes()?)?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, NnError> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ConvSpec;
    use rand::SeedableRng;

    fn sample() -> Checkpoint {
        let spec = NetSpec::text_cnn(ConvSpec::new(vec![2], 3, 4), 6, Some(5), 1, 2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut params = ParamSet::init(&spec, &mut rng);
        params.quantize_f32();
        Checkpoint { spec, params, seed: 1, metrics: serde_json::json!({"micro_f1": 0.5}) }
    }

    #[test]
    fn quantized_params_survive_exactly() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes().unwrap()).unwrap();
        assert_eq!(back.params.tensors(), c.params.tensors());
        assert_eq!(back.metrics, c.metrics);
    }

    #[test]
    fn truncation_and_version_are_detected() {
        let bytes = sample().to_bytes().unwrap();
        let err = Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(err.to_string().contains("checksum"));
        let text = String::from_utf8_lossy(&bytes).replacen("\"version\":1", "\"version\":9", 1);
        let mut bumped = text.as_bytes()[..text.find('\n').unwrap() + 1].to_vec();
        bumped.extend_from_slice(&bytes[bytes.iter().position(|&b| b == b'\n').unwrap() + 1..]);
        assert!(Checkpoint::from_bytes(&bumped).unwrap_err().to_string().contains("version"));
    }
}
