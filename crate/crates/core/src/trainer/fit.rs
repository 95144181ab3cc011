//! Mini-batch Adam with seeded shuffling and early stopping.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::embed::EmbeddingTensor;
use crate::metrics::{confusion, micro_f1};
use crate::model::{note_backward, note_forward, note_forward_cached, Aggregation, ModelError, NoteScores};
use crate::nn::{adam_step_except, AdamConfig, AdamState, ConvOutput, ForwardCache, GradSet, NnError, ParamSet, TextCnn};
use crate::util;

/// One note as seen by a network during training.
pub(crate) struct Sample<'a> {
    pub chunks: &'a [EmbeddingTensor],
    pub aux: &'a [f64],
    pub labels: Vec<bool>,
    /// Per-chunk conv outputs, reused while the conv tensors are frozen.
    pub conv: Option<&'a [ConvOutput]>,
}

impl Sample<'_> {
    fn forward<'s>(
        &'s self,
        net: &TextCnn,
        params: &ParamSet,
        agg: Aggregation,
        cached: bool,
    ) -> Result<(NoteScores, Vec<ForwardCache<'s>>), ModelError> {
        match self.conv {
            Some(conv) if cached => note_forward_cached(net, params, self.chunks, conv, self.aux, agg),
            _ => note_forward(net, params, self.chunks, self.aux, agg),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Micro-F1 at threshold 0.5; `None` without validation data.
    pub val_micro_f1: Option<f64>,
    pub improved: bool,
    pub frozen: bool,
}

pub(crate) struct FitOptions<'a> {
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub aggregation: Aggregation,
    /// Tensor-name prefix held fixed during the first `freeze_epochs`.
    pub freeze: Option<(&'a str, usize)>,
    pub label: &'a str,
}

pub(crate) fn val_micro_f1(
    net: &TextCnn,
    params: &ParamSet,
    val: &[Sample<'_>],
    agg: Aggregation,
    cached: bool,
) -> Result<Option<f64>, TrainError> {
    if val.is_empty() {
        return Ok(None);
    }
    let mut decisions = Vec::with_capacity(val.len());
    let mut labels = Vec::with_capacity(val.len());
    for s in val {
        let (out, _) = s.forward(net, params, agg, cached)?;
        decisions.push(out.scores.iter().map(|&p| p >= 0.5).collect());
        labels.push(s.labels.clone());
    }
    Ok(Some(micro_f1(&confusion(&decisions, &labels)?)))
}

/// Trains `params` and returns the parameters of the best validation epoch
/// (the last epoch when there is no validation data).
pub(crate) fn fit(
    net: &TextCnn,
    mut params: ParamSet,
    train: &[Sample<'_>],
    val: &[Sample<'_>],
    opts: &FitOptions<'_>,
) -> Result<(ParamSet, Vec<EpochRecord>), TrainError> {
    if train.is_empty() {
        return Err(TrainError::Config(format!("{}: empty training set", opts.label)));
    }
    check_conv_cache(net, &params, train.iter().chain(val))?;
    let mut state = AdamState::new(&params, opts.adam);
    let mut grads = GradSet::zeros_like(&params);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best: Option<(f64, ParamSet)> = None;
    let mut stall = 0usize;
    let mut history = Vec::new();

    for epoch in 1..=opts.epochs {
        order.sort_unstable();
        order.shuffle(&mut util::rng(util::mix(&[opts.seed, epoch as u64])));
        let frozen = opts.freeze.filter(|&(_, n)| epoch <= n).map(|(p, _)| p);
        let cached = frozen == Some("conv");
        let mut loss_sum = 0.0;
        for batch in order.chunks(opts.batch_size) {
            grads.fill_zero();
            for &i in batch {
                let s = &train[i];
                let (_, caches) = s.forward(net, &params, opts.aggregation, cached)?;
                let loss = note_backward(net, &params, &caches, &s.labels, opts.aggregation, &mut grads)?;
                if !loss.is_finite() {
                    return Err(TrainError::NonFinite { model: opts.label.to_owned(), epoch });
                }
                loss_sum += loss;
            }
            grads.scale(1.0 / batch.len() as f64);
            if let Some(prefix) = frozen {
                grads.zero_prefix(prefix);
            }
            adam_step_except(&mut params, &grads, &mut state, frozen)?;
        }
        if !params.is_finite() {
            return Err(TrainError::NonFinite { model: opts.label.to_owned(), epoch });
        }
        let train_loss = loss_sum / train.len() as f64;
        let f1 = val_micro_f1(net, &params, val, opts.aggregation, cached)?;
        let improved = match (&best, f1) {
            (None, _) | (_, None) => true,
            (Some((b, _)), Some(f)) => f > *b,
        };
        if improved {
            best = Some((f1.unwrap_or(f64::NEG_INFINITY), params.clone()));
            stall = 0;
        } else {
            stall += 1;
        }
        log::debug!("{} epoch {epoch}: loss {train_loss:.5} val micro-F1 {f1:?}", opts.label);
        history.push(EpochRecord { epoch, train_loss, val_micro_f1: f1, improved, frozen: frozen.is_some() });
        if stall >= opts.patience {
            break;
        }
    }
    let (_, params) = best.expect("at least one epoch ran");
    Ok((params, history))
}

/// Spot-checks that supplied conv outputs match the initial conv tensors.
fn check_conv_cache<'a>(
    net: &TextCnn,
    params: &ParamSet,
    mut samples: impl Iterator<Item = &'a Sample<'a>>,
) -> Result<(), TrainError> {
    if let Some(s) = samples.find(|s| s.conv.is_some()) {
        let conv = s.conv.expect("found above");
        let fresh = net.conv_pass(params, &s.chunks[0])?;
        if conv.first() != Some(&fresh) {
            return Err(NnError::Usage("cached conv outputs do not match the network's conv tensors".into()).into());
        }
    }
    Ok(())
}
