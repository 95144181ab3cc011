use super::{Aggregation, ChapterModel, CodeModel, ModelError};
use crate::corpus::LabelSpace;
use crate::embed::EmbeddingTensor;
use crate::nn::{ConvOutput, ForwardCache, GradSet, NnError, ParamSet, TextCnn, PROB_CLAMP};

/// Note-level output of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct NoteScores {
    pub scores: Vec<f64>,
    /// Aggregated pooled features.
    pub features: Vec<f64>,
}

fn aggregate(rows: &[&[f64]], agg: Aggregation) -> Vec<f64> {
    let mut out = rows[0].to_vec();
    for r in &rows[1..] {
        for (o, v) in out.iter_mut().zip(*r) {
            match agg {
                Aggregation::Max => *o = o.max(*v),
                Aggregation::Mean => *o += v,
            }
        }
    }
    if agg == Aggregation::Mean {
        let n = rows.len() as f64;
        out.iter_mut().for_each(|v| *v /= n);
    }
    out
}

/// Runs `net` on every chunk and aggregates scores and features.
pub fn note_forward<'e>(
    net: &TextCnn,
    params: &ParamSet,
    chunks: &'e [EmbeddingTensor],
    aux: &[f64],
    agg: Aggregation,
) -> Result<(NoteScores, Vec<ForwardCache<'e>>), ModelError> {
    if chunks.is_empty() {
        return Err(ModelError::EmptyNote);
    }
    let caches = chunks.iter().map(|c| net.forward(params, c, aux)).collect::<Result<Vec<_>, _>>()?;
    Ok((aggregate_caches(&caches, agg), caches))
}

/// [`note_forward`] reusing per-chunk conv outputs computed with the
/// current conv tensors.
pub fn note_forward_cached<'e>(
    net: &TextCnn,
    params: &ParamSet,
    chunks: &'e [EmbeddingTensor],
    convs: &[ConvOutput],
    aux: &[f64],
    agg: Aggregation,
) -> Result<(NoteScores, Vec<ForwardCache<'e>>), ModelError> {
    if chunks.is_empty() {
        return Err(ModelError::EmptyNote);
    }
    if convs.len() != chunks.len() {
        return Err(ModelError::Nn(NnError::Shape(format!("{} conv outputs for {} chunks", convs.len(), chunks.len()))));
    }
    let caches = chunks
        .iter()
        .zip(convs)
        .map(|(c, conv)| net.forward_with_conv(params, c, conv, aux))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((aggregate_caches(&caches, agg), caches))
}

fn aggregate_caches(caches: &[ForwardCache<'_>], agg: Aggregation) -> NoteScores {
    let probs: Vec<&[f64]> = caches.iter().map(ForwardCache::probs).collect();
    let feats: Vec<&[f64]> = caches.iter().map(ForwardCache::features).collect();
    NoteScores { scores: aggregate(&probs, agg), features: aggregate(&feats, agg) }
}

/// Accumulates the gradient of the note-level loss into `grads` and returns
/// that loss. Under max aggregation each label's gradient flows only to the
/// first chunk attaining the maximum.
pub fn note_backward(
    net: &TextCnn,
    params: &ParamSet,
    caches: &[ForwardCache<'_>],
    labels: &[bool],
    agg: Aggregation,
    grads: &mut GradSet,
) -> Result<f64, ModelError> {
    if caches.is_empty() {
        return Err(ModelError::EmptyNote);
    }
    let probs: Vec<&[f64]> = caches.iter().map(ForwardCache::probs).collect();
    let p = aggregate(&probs, agg);
    let loss = crate::nn::bce_loss(&p, labels)?;
    let k = p.len() as f64;
    let n = caches.len();
    let mut dlogits = vec![vec![0.0; p.len()]; n];
    for (j, (&pj, &yj)) in p.iter().zip(labels).enumerate() {
        if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&pj) {
            continue;
        }
        let y = if yj { 1.0 } else { 0.0 };
        match agg {
            Aggregation::Max => {
                let c = probs.iter().position(|row| row[j] == pj).expect("max is attained");
                dlogits[c][j] = (pj - y) / k;
            }
            Aggregation::Mean => {
                let dp = (pj - y) / (pj * (1.0 - pj)) / k;
                for (c, row) in probs.iter().enumerate() {
                    dlogits[c][j] = dp * row[j] * (1.0 - row[j]) / n as f64;
                }
            }
        }
    }
    for (cache, d) in caches.iter().zip(&dlogits) {
        net.backward_from_logits(params, cache, d, grads)?;
    }
    Ok(loss)
}

/// Chapter scores and pooled features for a note.
pub fn chapter_forward_note(
    chunks: &[EmbeddingTensor],
    m: &ChapterModel,
    agg: Aggregation,
) -> Result<NoteScores, ModelError> {
    Ok(note_forward(&m.net, &m.params, chunks, &[], agg)?.0)
}

/// Auxiliary code-model input: pooled chapter features then chapter scores.
pub fn transfer_input(chapter: &NoteScores) -> Vec<f64> {
    let mut v = chapter.features.clone();
    v.extend_from_slice(&chapter.scores);
    v
}

/// Code-level output; codes of chapters that were not run score 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeScores {
    pub scores: Vec<f64>,
    /// Whether the code's chapter model was run.
    pub evaluated: Vec<bool>,
}

pub(crate) fn check_code_models(models: &[CodeModel], space: &LabelSpace) -> Result<(), ModelError> {
    let by_chapter = space.codes_by_chapter();
    if models.len() != by_chapter.len() {
        return Err(ModelError::Compatibility(format!(
            "{} code models for {} chapters",
            models.len(),
            by_chapter.len()
        )));
    }
    for (i, (m, codes)) in models.iter().zip(&by_chapter).enumerate() {
        if m.chapter_id != i || &m.code_indices != codes {
            return Err(ModelError::Compatibility(format!("code model {i} does not match the label space")));
        }
        if let Some((net, _)) = &m.inner {
            if net.out_dim() != codes.len() {
                return Err(ModelError::Compatibility(format!("code model {i} has the wrong output width")));
            }
        }
    }
    Ok(())
}

/// Runs the code models of the `active` chapters.
pub fn code_forward_note(
    chunks: &[EmbeddingTensor],
    chapter: &NoteScores,
    models: &[CodeModel],
    active: &[bool],
    space: &LabelSpace,
    agg: Aggregation,
) -> Result<CodeScores, ModelError> {
    check_code_models(models, space)?;
    if chapter.scores.len() != space.n_chapters() || active.len() != space.n_chapters() {
        return Err(ModelError::Nn(NnError::Shape(format!(
            "expected {} chapter scores and flags",
            space.n_chapters()
        ))));
    }
    let aux = transfer_input(chapter);
    let mut scores = vec![0.0; space.n_codes()];
    let mut evaluated = vec![false; space.n_codes()];
    for m in models.iter().filter(|m| active[m.chapter_id]) {
        let Some((net, params)) = &m.inner else { continue };
        let input: &[f64] = if net.spec().aux_dim == 0 { &[] } else { &aux };
        let (out, _) = note_forward(net, params, chunks, input, agg)?;
        for (&ci, &s) in m.code_indices.iter().zip(&out.scores) {
            scores[ci] = s;
            evaluated[ci] = true;
        }
    }
    Ok(CodeScores { scores, evaluated })
}
