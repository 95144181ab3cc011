//! Two-stage training (chapter model, then per-chapter code models), threshold
//! tuning, evaluation and the data-treatment ablation.

mod ablation;
mod config;
mod fit;
mod run_dir;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{augment_shuffle, undersample, BalanceConfig, CorpusError, Example, LabelSpace, Splits};
use crate::embed::{ChunkRef, EmbedError, EmbeddingProvider, EmbeddingTensor};
use crate::metrics::{confusion, micro_f1, select_thresholds, MetricsError, MetricsReport};
use crate::model::{
    note_forward_cached, predict_embedded, transfer_input, ChapterModel, CodeModel, ModelBundle, ModelError,
};
use crate::nn::{ConvOutput, NnError};
use crate::preprocess::Preprocessor;
use crate::util;

pub use ablation::{run_ablation, AblationDelta, AblationRow, AblationTable};
pub use config::{AblationPlan, TrainConfig, Variant};
pub use fit::EpochRecord;
pub use run_dir::{write_run_dir, RunFiles};

use fit::{fit, FitOptions, Sample};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite loss or parameters in {model} at epoch {epoch}")]
    NonFinite { model: String, epoch: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Examples with their chunk embeddings.
pub struct EmbeddedSet {
    pub examples: Vec<Example>,
    pub embeddings: Vec<Vec<EmbeddingTensor>>,
}

impl EmbeddedSet {
    pub fn new(examples: Vec<Example>, provider: &dyn EmbeddingProvider) -> Result<Self, TrainError> {
        let embeddings = examples
            .iter()
            .map(|ex| {
                let refs: Vec<ChunkRef<'_>> =
                    ex.chunks.iter().enumerate().map(|(i, c)| ChunkRef::new(&ex.note_id, i, c)).collect();
                provider.embed_batch(&refs)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { examples, embeddings })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn note_ids(&self) -> BTreeSet<&str> {
        self.examples.iter().map(|e| e.note_id.as_str()).collect()
    }
}

/// Applies the variant's treatments to the training split only: undersampling
/// first, then sentence-shuffle copies of whatever was kept.
pub fn treat_train_split(
    train: &[Example],
    variant: Variant,
    pre: &Preprocessor,
    cfg: &TrainConfig,
) -> Vec<Example> {
    let mut out = if variant.balances() {
        let bc = BalanceConfig { target_ratio: cfg.balance_ratio, seed: util::mix(&[cfg.seed, 4]), level: cfg.balance_level };
        undersample(train, &bc)
    } else {
        train.to_vec()
    };
    if variant.augments() && cfg.augment_copies > 0 {
        let seed = util::mix(&[cfg.seed, 5]);
        let copies: Vec<Example> = out
            .iter()
            .flat_map(|ex| augment_shuffle(ex, &ex.sentences, cfg.augment_copies, seed, &pre.vocab, pre.chunk_len))
            .collect();
        out.extend(copies);
    }
    out
}

fn fit_options<'a>(cfg: &TrainConfig, seed: u64, label: &'a str, freeze: Option<(&'a str, usize)>) -> FitOptions<'a> {
    FitOptions {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        patience: cfg.patience,
        adam: cfg.adam,
        seed,
        aggregation: cfg.aggregation,
        freeze,
        label,
    }
}

/// Layer 1: one network over all chapter labels.
pub fn train_chapter(
    train: &EmbeddedSet,
    val: &EmbeddedSet,
    space: &LabelSpace,
    cfg: &TrainConfig,
) -> Result<(ChapterModel, Vec<EpochRecord>), TrainError> {
    cfg.validate()?;
    let mut rng = util::rng(util::mix(&[cfg.seed, 1]));
    let model = ChapterModel::new(&cfg.arch, space.n_chapters(), &mut rng)?;
    let (tr, va) = (chapter_samples(train), chapter_samples(val));
    let opts = fit_options(cfg, util::mix(&[cfg.seed, 11]), "chapter", None);
    let (params, history) = fit(&model.net, model.params.clone(), &tr, &va, &opts)?;
    log::info!("chapter model: {} epochs, best val micro-F1 {:?}", history.len(), best_f1(&history));
    Ok((ChapterModel { net: model.net, params }, history))
}

fn chapter_samples(set: &EmbeddedSet) -> Vec<Sample<'_>> {
    set.examples
        .iter()
        .zip(&set.embeddings)
        .map(|(ex, emb)| Sample { chunks: emb, aux: &[], labels: ex.chapter_labels.clone(), conv: None })
        .collect()
}

fn code_samples<'a>(
    set: &'a EmbeddedSet,
    chapter: &'a ChapterPass,
    rows: &[usize],
    codes: &[usize],
) -> Vec<Sample<'a>> {
    rows.iter()
        .map(|&i| Sample {
            chunks: &set.embeddings[i],
            aux: &chapter.aux[i],
            labels: codes.iter().map(|&k| set.examples[i].code_labels[k]).collect(),
            conv: chapter.conv.as_ref().map(|c| c[i].as_slice()),
        })
        .collect()
}

/// Chapter-model outputs reused by every code model: the transfer inputs
/// and, with transfer, the conv outputs the copied conv reproduces.
struct ChapterPass {
    aux: Vec<Vec<f64>>,
    conv: Option<Vec<Vec<ConvOutput>>>,
}

impl ChapterPass {
    fn run(set: &EmbeddedSet, chapter: &ChapterModel, cfg: &TrainConfig) -> Result<Self, TrainError> {
        if !cfg.transfer {
            return Ok(Self { aux: vec![Vec::new(); set.len()], conv: None });
        }
        let (net, params) = (&chapter.net, &chapter.params);
        let conv = set
            .embeddings
            .iter()
            .map(|e| e.iter().map(|c| net.conv_pass(params, c)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        let aux = set
            .embeddings
            .iter()
            .zip(&conv)
            .map(|(e, c)| Ok(transfer_input(&note_forward_cached(net, params, e, c, &[], cfg.aggregation)?.0)))
            .collect::<Result<Vec<_>, TrainError>>()?;
        Ok(Self { aux, conv: Some(conv) })
    }
}

fn best_f1(h: &[EpochRecord]) -> Option<f64> {
    h.iter().filter_map(|r| r.val_micro_f1).reduce(f64::max)
}

/// Chapter-positive indices plus a seeded sample of chapter-negatives.
fn code_subset(set: &EmbeddedSet, chapter: usize, ratio: f64, seed: u64) -> Vec<usize> {
    let (mut pos, mut neg): (Vec<usize>, Vec<usize>) =
        (0..set.len()).partition(|&i| set.examples[i].chapter_labels[chapter]);
    neg.shuffle(&mut util::rng(seed));
    neg.truncate(((pos.len() as f64) * ratio).round() as usize);
    pos.extend(neg);
    pos.sort_unstable();
    pos
}

/// Per-chapter history; `None` for chapters without codes.
pub type CodeHistory = Vec<Option<Vec<EpochRecord>>>;

/// Layer 2: one network per chapter, trained on that chapter's positives and
/// sampled negatives.
pub fn train_codes(
    train: &EmbeddedSet,
    val: &EmbeddedSet,
    chapter: &ChapterModel,
    space: &LabelSpace,
    cfg: &TrainConfig,
) -> Result<(Vec<CodeModel>, CodeHistory), TrainError> {
    cfg.validate()?;
    let (train_pass, val_pass) = (ChapterPass::run(train, chapter, cfg)?, ChapterPass::run(val, chapter, cfg)?);
    let mut models = Vec::with_capacity(space.n_chapters());
    let mut history = Vec::with_capacity(space.n_chapters());
    for (c, idx) in space.codes_by_chapter().into_iter().enumerate() {
        let mut rng = util::rng(util::mix(&[cfg.seed, 2, c as u64]));
        if idx.is_empty() {
            models.push(CodeModel::empty(c));
            history.push(None);
            continue;
        }
        let mut model = if cfg.transfer {
            let mut m = CodeModel::new(&cfg.arch, c, idx.clone(), space.n_chapters(), &mut rng)?;
            m.init_conv_from(chapter)?;
            m
        } else {
            CodeModel::standalone(&cfg.arch, c, idx.clone(), &mut rng)?
        };
        let tr_rows = code_subset(train, c, cfg.negative_ratio, util::mix(&[cfg.seed, 3, c as u64]));
        let va_rows = code_subset(val, c, cfg.negative_ratio, util::mix(&[cfg.seed, 6, c as u64]));
        if tr_rows.is_empty() {
            log::warn!("chapter {c}: no training examples, keeping initial code model");
            models.push(model);
            history.push(Some(Vec::new()));
            continue;
        }
        let tr = code_samples(train, &train_pass, &tr_rows, &idx);
        let va = code_samples(val, &val_pass, &va_rows, &idx);
        let label = format!("codes[{c}]");
        let freeze = cfg.transfer.then_some(("conv", cfg.freeze_epochs));
        let opts = fit_options(cfg, util::mix(&[cfg.seed, 12, c as u64]), &label, freeze);
        let (net, init) = model.inner.take().expect("non-empty chapter has a network");
        let (params, h) = fit(&net, init, &tr, &va, &opts)?;
        log::info!("{label}: {} examples, {} epochs, best val micro-F1 {:?}", tr.len(), h.len(), best_f1(&h));
        model.inner = Some((net, params));
        models.push(model);
        history.push(Some(h));
    }
    Ok((models, history))
}

/// Scores and decisions of a bundle over a labeled set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub chapter_micro_f1: f64,
    pub code_micro_f1: f64,
    pub chapters: MetricsReport,
    pub codes: MetricsReport,
}

/// One score vector per note.
pub type ScoreRows = Vec<Vec<f64>>;

/// Chapter scores and gated code scores (0 for codes not reported).
pub fn score_set(bundle: &ModelBundle, set: &EmbeddedSet) -> Result<(ScoreRows, ScoreRows), TrainError> {
    let n_ch = bundle.label_space.n_chapters();
    let mut ch = Vec::with_capacity(set.len());
    let mut co = Vec::with_capacity(set.len());
    for emb in &set.embeddings {
        let r = predict_embedded(emb, bundle)?;
        ch.push(r.chapters.iter().map(|c| c.score).collect());
        let mut row = vec![0.0; bundle.label_space.n_codes()];
        for c in &r.codes {
            let i = bundle.label_space.code_index(&c.code).expect("reported codes are in the label space");
            row[i] = c.score;
        }
        co.push(row);
        debug_assert_eq!(r.chapters.len(), n_ch);
    }
    Ok((ch, co))
}

pub fn evaluate(bundle: &ModelBundle, set: &EmbeddedSet) -> Result<Evaluation, TrainError> {
    let (ch_scores, code_scores) = score_set(bundle, set)?;
    let n_ch = bundle.label_space.n_chapters();
    let (t_ch, t_code) = bundle.thresholds.split_at(n_ch);
    let ch_dec = crate::metrics::decide(&ch_scores, t_ch);
    let code_dec = crate::metrics::decide(&code_scores, t_code);
    let ch_lab: Vec<Vec<bool>> = set.examples.iter().map(|e| e.chapter_labels.clone()).collect();
    let code_lab: Vec<Vec<bool>> = set.examples.iter().map(|e| e.code_labels.clone()).collect();
    let ch_counts = confusion(&ch_dec, &ch_lab)?;
    let code_counts = confusion(&code_dec, &code_lab)?;
    let ch_names: Vec<String> = bundle.label_space.chapters().iter().map(|c| c.name.clone()).collect();
    let code_names: Vec<String> = bundle.label_space.codes().iter().map(|c| c.code.clone()).collect();
    Ok(Evaluation {
        chapter_micro_f1: micro_f1(&ch_counts),
        code_micro_f1: micro_f1(&code_counts),
        chapters: MetricsReport::new(&ch_names, &ch_counts, t_ch)?,
        codes: MetricsReport::new(&code_names, &code_counts, t_code)?,
    })
}

/// Per-label thresholds tuned on `set`, never pooling worse than 0.5.
pub fn tune_bundle_thresholds(bundle: &ModelBundle, set: &EmbeddedSet, grid: &[f64]) -> Result<Vec<f64>, TrainError> {
    let (ch_scores, code_scores) = score_set(bundle, set)?;
    let ch_lab: Vec<Vec<bool>> = set.examples.iter().map(|e| e.chapter_labels.clone()).collect();
    let code_lab: Vec<Vec<bool>> = set.examples.iter().map(|e| e.code_labels.clone()).collect();
    let mut t = select_thresholds(&ch_scores, &ch_lab, grid, 0.5)?;
    t.extend(select_thresholds(&code_scores, &code_lab, grid, 0.5)?);
    Ok(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub chapter: Vec<EpochRecord>,
    pub codes: CodeHistory,
}

pub struct TrainOutcome {
    pub bundle: ModelBundle,
    pub history: TrainHistory,
    pub validation: Evaluation,
    pub test: Option<Evaluation>,
    pub train_examples: usize,
}

/// Treats the training split, trains both layers, tunes thresholds on the
/// validation split and evaluates.
pub fn train_pipeline(
    splits: &Splits,
    space: &LabelSpace,
    pre: &Preprocessor,
    cfg: &TrainConfig,
    variant: Variant,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if pre.chunk_len != cfg.arch.chunk_len {
        return Err(TrainError::Config("preprocessor chunk length differs from arch.chunk_len".into()));
    }
    if splits.train.is_empty() {
        return Err(TrainError::Config("empty training split".into()));
    }
    let provider = cfg.embedding.build()?;
    let treated = treat_train_split(&splits.train, variant, pre, cfg);
    log::info!("{variant}: {} training examples (from {})", treated.len(), splits.train.len());
    let train = EmbeddedSet::new(treated, provider.as_ref())?;
    let val = EmbeddedSet::new(splits.validation.clone(), provider.as_ref())?;

    let (chapter, ch_hist) = train_chapter(&train, &val, space, cfg)?;
    let (codes, code_hist) = train_codes(&train, &val, &chapter, space, cfg)?;
    let n = space.n_labels();
    let mut bundle = ModelBundle::new(
        space.clone(),
        pre.clone(),
        cfg.embedding.clone(),
        cfg.arch.clone(),
        chapter,
        codes,
        vec![0.5; n],
        cfg.chapter_gate,
    )?;
    bundle.aggregation = cfg.aggregation;
    if cfg.tune_thresholds && !val.is_empty() {
        bundle.thresholds = tune_bundle_thresholds(&bundle, &val, &cfg.threshold_grid)?;
    }
    let validation = evaluate(&bundle, &val)?;
    let test = if splits.test.is_empty() {
        None
    } else {
        Some(evaluate(&bundle, &EmbeddedSet::new(splits.test.clone(), provider.as_ref())?)?)
    };
    bundle.metrics = serde_json::json!({
        "variant": variant.name(),
        "validation_chapter_micro_f1": validation.chapter_micro_f1,
        "validation_code_micro_f1": validation.code_micro_f1,
    });
    Ok(TrainOutcome {
        bundle,
        history: TrainHistory { chapter: ch_hist, codes: code_hist },
        validation,
        test,
        train_examples: train.len(),
    })
}
