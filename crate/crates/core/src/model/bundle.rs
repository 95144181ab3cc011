//! Trained model bundle and its on-disk directory layout:
//! `bundle.json`, `vocab.txt`, `abbreviations.tsv`, `chapter.ckpt` and one
//! `code_NN.ckpt` per chapter that has codes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::note::check_code_models;
use super::{Aggregation, ArchConfig, ChapterModel, CodeModel, Gating, ModelError};
use crate::corpus::LabelSpace;
use crate::embed::ProviderConfig;
use crate::nn::{Checkpoint, TextCnn};
use crate::preprocess::{AbbreviationTable, Preprocessor, Vocabulary};
use crate::util::sha256_hex;

pub const BUNDLE_VERSION: u32 = 1;
const MANIFEST: &str = "bundle.json";

/// A file inside the bundle with its content hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointRef {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub version: u32,
    pub fingerprint: String,
    pub label_space: LabelSpace,
    pub arch: ArchConfig,
    pub embedding: ProviderConfig,
    pub chunk_len: usize,
    pub thresholds: Vec<f64>,
    pub chapter_gate: f64,
    pub gating: Gating,
    pub aggregation: Aggregation,
    pub vocab: CheckpointRef,
    pub abbreviations: CheckpointRef,
    pub chapter: CheckpointRef,
    /// One entry per chapter; `None` for chapters without codes.
    pub codes: Vec<Option<CheckpointRef>>,
    #[serde(default)]
    pub metrics: serde_json::Value,
}

/// Everything inference needs. Immutable once built.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub label_space: LabelSpace,
    pub preprocessor: Preprocessor,
    pub embedding: ProviderConfig,
    pub arch: ArchConfig,
    pub chapter: ChapterModel,
    pub codes: Vec<CodeModel>,
    /// Chapter thresholds followed by code thresholds.
    pub thresholds: Vec<f64>,
    /// Minimum chapter score for its code model to run.
    pub chapter_gate: f64,
    pub gating: Gating,
    pub aggregation: Aggregation,
    pub fingerprint: String,
    pub metrics: serde_json::Value,
}

impl ModelBundle {
    /// Validates the parts and rounds all parameters to `f32`, so that a
    /// saved and reloaded bundle predicts bit-identically.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        label_space: LabelSpace,
        preprocessor: Preprocessor,
        embedding: ProviderConfig,
        arch: ArchConfig,
        mut chapter: ChapterModel,
        mut codes: Vec<CodeModel>,
        thresholds: Vec<f64>,
        chapter_gate: f64,
    ) -> Result<Self, ModelError> {
        chapter.params.quantize_f32();
        for m in &mut codes {
            if let Some((_, p)) = &mut m.inner {
                p.quantize_f32();
            }
        }
        let b = Self {
            fingerprint: label_space.fingerprint(),
            label_space,
            preprocessor,
            embedding,
            arch,
            chapter,
            codes,
            thresholds,
            chapter_gate,
            gating: Gating::Hard,
            aggregation: Aggregation::Max,
            metrics: serde_json::Value::Null,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn n_labels(&self) -> usize {
        self.label_space.n_labels()
    }

    fn validate(&self) -> Result<(), ModelError> {
        let n = self.label_space.n_labels();
        if self.thresholds.len() != n {
            return Err(ModelError::Bundle(format!("{} thresholds for {n} labels", self.thresholds.len())));
        }
        if self.thresholds.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err(ModelError::Bundle("thresholds must lie strictly inside (0, 1)".into()));
        }
        if !(self.chapter_gate > 0.0 && self.chapter_gate < 1.0) {
            return Err(ModelError::Bundle("chapter gate must lie strictly inside (0, 1)".into()));
        }
        if self.chapter.n_chapters() != self.label_space.n_chapters() {
            return Err(ModelError::Bundle("chapter model width differs from label space".into()));
        }
        if self.preprocessor.chunk_len != self.arch.chunk_len || self.embedding.dim != self.arch.embed_dim {
            return Err(ModelError::Bundle("chunk length or embedding width disagree with the architecture".into()));
        }
        self.check_consistency()
    }

    /// Fingerprint and code models agree with the stored label space.
    pub fn check_consistency(&self) -> Result<(), ModelError> {
        let actual = self.label_space.fingerprint();
        if actual != self.fingerprint {
            return Err(ModelError::Compatibility(format!(
                "bundle fingerprint {} but label space hashes to {actual}",
                self.fingerprint
            )));
        }
        check_code_models(&self.codes, &self.label_space)
    }

    /// Fails unless `space` is the label space this bundle was trained on.
    pub fn ensure_compatible(&self, space: &LabelSpace) -> Result<(), ModelError> {
        let other = space.fingerprint();
        if other != self.fingerprint {
            return Err(ModelError::Compatibility(format!(
                "bundle trained for label space {} but {other} was supplied",
                self.fingerprint
            )));
        }
        Ok(())
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<BundleManifest, ModelError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let put = |name: &str, bytes: &[u8]| -> Result<CheckpointRef, ModelError> {
            std::fs::write(dir.join(name), bytes)?;
            Ok(CheckpointRef { file: name.to_owned(), sha256: sha256_hex(bytes) })
        };
        let ckpt = |net: &TextCnn, params: &crate::nn::ParamSet| -> Result<Vec<u8>, ModelError> {
            Ok(Checkpoint {
                spec: net.spec().clone(),
                params: params.clone(),
                seed: 0,
                metrics: serde_json::Value::Null,
            }
            .to_bytes()?)
        };
        let vocab = put("vocab.txt", self.preprocessor.vocab.to_text().as_bytes())?;
        let abbreviations = put("abbreviations.tsv", self.preprocessor.abbreviations.to_tsv().as_bytes())?;
        let chapter = put("chapter.ckpt", &ckpt(&self.chapter.net, &self.chapter.params)?)?;
        let mut codes = Vec::with_capacity(self.codes.len());
        for m in &self.codes {
            codes.push(match &m.inner {
                Some((net, p)) => Some(put(&format!("code_{:02}.ckpt", m.chapter_id), &ckpt(net, p)?)?),
                None => None,
            });
        }
        let manifest = BundleManifest {
            version: BUNDLE_VERSION,
            fingerprint: self.fingerprint.clone(),
            label_space: self.label_space.clone(),
            arch: self.arch.clone(),
            embedding: self.embedding.clone(),
            chunk_len: self.preprocessor.chunk_len,
            thresholds: self.thresholds.clone(),
            chapter_gate: self.chapter_gate,
            gating: self.gating,
            aggregation: self.aggregation,
            vocab,
            abbreviations,
            chapter,
            codes,
            metrics: self.metrics.clone(),
        };
        let json = serde_json::to_vec_pretty(&manifest).map_err(|e| ModelError::Bundle(e.to_string()))?;
        std::fs::write(dir.join(MANIFEST), json)?;
        Ok(manifest)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, ModelError> {
        let dir = dir.as_ref();
        let raw = std::fs::read(dir.join(MANIFEST))?;
        let m: BundleManifest =
            serde_json::from_slice(&raw).map_err(|e| ModelError::Bundle(format!("unreadable manifest: {e}")))?;
        if m.version != BUNDLE_VERSION {
            return Err(ModelError::Bundle(format!(
                "bundle version {} is not supported (expected {BUNDLE_VERSION})",
                m.version
            )));
        }
        let fetch = |r: &CheckpointRef| -> Result<Vec<u8>, ModelError> {
            let bytes = std::fs::read(dir.join(&r.file))?;
            if sha256_hex(&bytes) != r.sha256 {
                return Err(ModelError::Bundle(format!("checksum mismatch for {}", r.file)));
            }
            Ok(bytes)
        };
        let utf8 = |b: Vec<u8>, what: &str| {
            String::from_utf8(b).map_err(|_| ModelError::Bundle(format!("{what} is not UTF-8")))
        };
        let vocab = Vocabulary::parse_text(&utf8(fetch(&m.vocab)?, "vocabulary")?)?;
        let abbreviations = AbbreviationTable::parse_tsv(&utf8(fetch(&m.abbreviations)?, "abbreviations")?)?;
        let preprocessor = Preprocessor::new(abbreviations, vocab, m.chunk_len)?;

        let ch = Checkpoint::from_bytes(&fetch(&m.chapter)?)?;
        if ch.spec != m.arch.chapter_spec(m.label_space.n_chapters()) {
            return Err(ModelError::Bundle("chapter checkpoint does not match the architecture".into()));
        }
        let chapter = ChapterModel::from_parts(ch.spec, ch.params)?;

        let by_chapter = m.label_space.codes_by_chapter();
        if m.codes.len() != by_chapter.len() {
            return Err(ModelError::Bundle(format!("{} code entries for {} chapters", m.codes.len(), by_chapter.len())));
        }
        let mut codes = Vec::with_capacity(by_chapter.len());
        for (i, (entry, idx)) in m.codes.iter().zip(by_chapter).enumerate() {
            codes.push(match entry {
                None => CodeModel { chapter_id: i, code_indices: idx, inner: None },
                Some(r) => {
                    let c = Checkpoint::from_bytes(&fetch(r)?)?;
                    let net = TextCnn::new(c.spec)?;
                    c.params.check_layout(net.spec())?;
                    CodeModel { chapter_id: i, code_indices: idx, inner: Some((net, c.params)) }
                }
            });
        }
        let b = Self {
            label_space: m.label_space,
            preprocessor,
            embedding: m.embedding,
            arch: m.arch,
            chapter,
            codes,
            thresholds: m.thresholds,
            chapter_gate: m.chapter_gate,
            gating: m.gating,
            aggregation: m.aggregation,
            fingerprint: m.fingerprint,
            metrics: m.metrics,
        };
        b.validate()?;
        Ok(b)
    }
}
