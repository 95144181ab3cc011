//! Two-layer hierarchical classifier: a chapter model over all chapters and
//! one code model per chapter, fed by the chapter model's note-level output.

mod bundle;
mod note;
mod predict;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::EmbedError;
use crate::nn::{ConvSpec, NetSpec, NnError, ParamSet, TextCnn};
use crate::preprocess::PreprocessError;

pub use bundle::{BundleManifest, CheckpointRef, ModelBundle, BUNDLE_VERSION};
pub use note::{
    chapter_forward_note, code_forward_note, note_backward, note_forward, note_forward_cached, transfer_input, CodeScores, NoteScores,
};
pub use predict::{
    predict_embedded, predict_note, predict_processed, predict_run_all_then_mask, ChapterPrediction, CodePrediction, PredictionResult,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("note has no content after cleaning")]
    EmptyNote,
    #[error("label space mismatch: {0}")]
    Compatibility(String),
    #[error("invalid bundle: {0}")]
    Bundle(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How chunk-level outputs combine into note-level outputs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Max,
    Mean,
}

/// How chapter scores affect code scores at inference.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gating {
    /// Only chapters scoring at least τ run their code model.
    #[default]
    Hard,
    /// As `Hard`, and reported code scores are multiplied by the chapter score.
    Soft,
}

/// Network sizes shared by the chapter model and the code models.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub embed_dim: usize,
    pub chunk_len: usize,
    pub kernel_widths: Vec<usize>,
    pub filters_per_width: usize,
    pub hidden: Option<usize>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self { embed_dim: 128, chunk_len: 128, kernel_widths: vec![3, 4, 5], filters_per_width: 64, hidden: Some(128) }
    }
}

impl ArchConfig {
    pub fn conv(&self) -> ConvSpec {
        ConvSpec::new(self.kernel_widths.clone(), self.filters_per_width, self.embed_dim)
    }

    pub fn feature_dim(&self) -> usize {
        self.kernel_widths.len() * self.filters_per_width
    }

    pub fn chapter_spec(&self, n_chapters: usize) -> NetSpec {
        NetSpec::text_cnn(self.conv(), self.chunk_len, self.hidden, 0, n_chapters)
    }

    /// Code nets take the chapter model's pooled features and chapter scores
    /// as auxiliary inputs.
    pub fn code_spec(&self, n_chapters: usize, n_codes: usize) -> NetSpec {
        NetSpec::text_cnn(self.conv(), self.chunk_len, self.hidden, self.feature_dim() + n_chapters, n_codes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChapterModel {
    pub net: TextCnn,
    pub params: ParamSet,
}

impl ChapterModel {
    pub fn new(arch: &ArchConfig, n_chapters: usize, rng: &mut impl Rng) -> Result<Self, ModelError> {
        let net = TextCnn::new(arch.chapter_spec(n_chapters))?;
        let params = ParamSet::init(net.spec(), rng);
        Ok(Self { net, params })
    }

    pub fn from_parts(spec: NetSpec, params: ParamSet) -> Result<Self, ModelError> {
        let net = TextCnn::new(spec)?;
        params.check_layout(net.spec())?;
        Ok(Self { net, params })
    }

    pub fn n_chapters(&self) -> usize {
        self.net.out_dim()
    }
}

/// Code model for one chapter; chapters without codes carry no network.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeModel {
    pub chapter_id: usize,
    /// Global code indices this model scores, in output order.
    pub code_indices: Vec<usize>,
    pub inner: Option<(TextCnn, ParamSet)>,
}

impl CodeModel {
    pub fn new(
        arch: &ArchConfig,
        chapter_id: usize,
        code_indices: Vec<usize>,
        n_chapters: usize,
        rng: &mut impl Rng,
    ) -> Result<Self, ModelError> {
        let inner = if code_indices.is_empty() {
            None
        } else {
            let net = TextCnn::new(arch.code_spec(n_chapters, code_indices.len()))?;
            let params = ParamSet::init(net.spec(), rng);
            Some((net, params))
        };
        Ok(Self { chapter_id, code_indices, inner })
    }

    /// A code model without layer-1 inputs or transferred weights.
    pub fn standalone(
        arch: &ArchConfig,
        chapter_id: usize,
        code_indices: Vec<usize>,
        rng: &mut impl Rng,
    ) -> Result<Self, ModelError> {
        let inner = if code_indices.is_empty() {
            None
        } else {
            let spec = NetSpec::text_cnn(arch.conv(), arch.chunk_len, arch.hidden, 0, code_indices.len());
            let net = TextCnn::new(spec)?;
            let params = ParamSet::init(net.spec(), rng);
            Some((net, params))
        };
        Ok(Self { chapter_id, code_indices, inner })
    }

    pub fn empty(chapter_id: usize) -> Self {
        Self { chapter_id, code_indices: Vec::new(), inner: None }
    }

    pub fn out_dim(&self) -> usize {
        self.code_indices.len()
    }

    /// Copies the chapter model's convolution kernels and biases.
    pub fn init_conv_from(&mut self, chapter: &ChapterModel) -> Result<(), ModelError> {
        if let Some((_, params)) = &mut self.inner {
            params.copy_prefix_from(&chapter.params, "conv")?;
        }
        Ok(())
    }
}
