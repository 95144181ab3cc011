use serde::{Deserialize, Serialize};

use super::note::{chapter_forward_note, code_forward_note};
use super::{Gating, ModelBundle, ModelError};
use crate::embed::{ChunkRef, EmbeddingProvider, EmbeddingTensor};
use crate::preprocess::ProcessedNote;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChapterPrediction {
    pub id: usize,
    pub name: String,
    pub score: f64,
    pub decided: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodePrediction {
    pub code: String,
    pub description: String,
    pub score: f64,
    pub chapter_id: usize,
    pub decided: bool,
}

/// Every chapter with its score, and the codes of the chapters that passed
/// the gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub chapters: Vec<ChapterPrediction>,
    pub codes: Vec<CodePrediction>,
    pub fingerprint: String,
}

impl PredictionResult {
    pub fn decided_codes(&self) -> Vec<&str> {
        self.codes.iter().filter(|c| c.decided).map(|c| c.code.as_str()).collect()
    }

    pub fn decided_chapters(&self) -> Vec<usize> {
        self.chapters.iter().filter(|c| c.decided).map(|c| c.id).collect()
    }

    /// Codes by score descending, ties in label order.
    pub fn sort_codes_by_score(&mut self) {
        self.codes.sort_by(|a, b| b.score.total_cmp(&a.score));
    }
}

enum Route {
    Gated,
    RunAllThenMask,
}

fn assemble(chunks: &[EmbeddingTensor], bundle: &ModelBundle, route: Route) -> Result<PredictionResult, ModelError> {
    bundle.check_consistency()?;
    let space = &bundle.label_space;
    let n_ch = space.n_chapters();
    let chapter = chapter_forward_note(chunks, &bundle.chapter, bundle.aggregation)?;
    let passed: Vec<bool> = chapter.scores.iter().map(|&s| s >= bundle.chapter_gate).collect();
    let run = match route {
        Route::Gated => passed.clone(),
        Route::RunAllThenMask => vec![true; n_ch],
    };
    let codes = code_forward_note(chunks, &chapter, &bundle.codes, &run, space, bundle.aggregation)?;

    let chapters = space
        .chapters()
        .iter()
        .map(|c| ChapterPrediction {
            id: c.id,
            name: c.name.clone(),
            score: chapter.scores[c.id],
            decided: chapter.scores[c.id] >= bundle.thresholds[c.id],
        })
        .collect();
    let codes = space
        .codes()
        .iter()
        .enumerate()
        .filter(|(_, c)| passed[c.chapter_id])
        .map(|(i, c)| {
            let raw = codes.scores[i];
            let score = match bundle.gating {
                Gating::Hard => raw,
                Gating::Soft => raw * chapter.scores[c.chapter_id],
            };
            CodePrediction {
                code: c.code.clone(),
                description: c.description.clone(),
                score,
                chapter_id: c.chapter_id,
                decided: score >= bundle.thresholds[n_ch + i],
            }
        })
        .collect();
    Ok(PredictionResult { chapters, codes, fingerprint: bundle.fingerprint.clone() })
}

/// Prediction from already embedded chunks, running only the code models
/// of chapters that clear the gate.
pub fn predict_embedded(chunks: &[EmbeddingTensor], bundle: &ModelBundle) -> Result<PredictionResult, ModelError> {
    assemble(chunks, bundle, Route::Gated)
}

/// Runs every code model, then drops the codes of chapters below the gate.
/// Produces the same result as [`predict_embedded`] at higher cost.
pub fn predict_run_all_then_mask(
    chunks: &[EmbeddingTensor],
    bundle: &ModelBundle,
) -> Result<PredictionResult, ModelError> {
    assemble(chunks, bundle, Route::RunAllThenMask)
}

/// Embeds a preprocessed note and predicts.
pub fn predict_processed(
    note_id: &str,
    note: &ProcessedNote,
    bundle: &ModelBundle,
    provider: &dyn EmbeddingProvider,
) -> Result<PredictionResult, ModelError> {
    if note.chunks.is_empty() {
        return Err(ModelError::EmptyNote);
    }
    let texts: Vec<String> = (0..note.chunks.len()).map(|i| note.chunk_text(i)).collect();
    let refs: Vec<ChunkRef<'_>> = note
        .chunks
        .iter()
        .zip(&texts)
        .enumerate()
        .map(|(i, (c, t))| ChunkRef::new(note_id, i, c).with_text(t))
        .collect();
    let embedded = provider.embed_batch(&refs)?;
    predict_embedded(&embedded, bundle)
}

/// Full pipeline from raw note text.
pub fn predict_note(
    raw_text: &str,
    bundle: &ModelBundle,
    provider: &dyn EmbeddingProvider,
) -> Result<PredictionResult, ModelError> {
    let note = bundle.preprocessor.process(raw_text);
    predict_processed("input", &note, bundle, provider)
}
