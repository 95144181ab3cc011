//! Multi-label confusion counts, F1 scores and per-label threshold tuning.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("metric undefined: {0}")]
    Undefined(String),
    #[error("invalid threshold grid: {0}")]
    Grid(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl LabelCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn is_empty_label(&self) -> bool {
        self.tp == 0 && self.fp == 0 && self.fn_ == 0
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `2tp / (2tp + fp + fn)`; a label with nothing to find and nothing
    /// predicted scores 1.0.
    pub fn f1(&self) -> f64 {
        if self.is_empty_label() {
            1.0
        } else {
            2.0 * self.tp as f64 / (2 * self.tp + self.fp + self.fn_) as f64
        }
    }

    fn add(&mut self, o: &LabelCounts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub per_label: Vec<LabelCounts>,
}

impl ConfusionCounts {
    pub fn pooled(&self) -> LabelCounts {
        let mut p = LabelCounts::default();
        self.per_label.iter().for_each(|c| p.add(c));
        p
    }

    pub fn n_labels(&self) -> usize {
        self.per_label.len()
    }

    /// Adds another count table with the same label count.
    pub fn merge(&mut self, other: &ConfusionCounts) -> Result<(), MetricsError> {
        if self.per_label.is_empty() {
            self.per_label = vec![LabelCounts::default(); other.per_label.len()];
        }
        if self.per_label.len() != other.per_label.len() {
            return Err(MetricsError::Shape("label counts differ".into()));
        }
        self.per_label.iter_mut().zip(&other.per_label).for_each(|(a, b)| a.add(b));
        Ok(())
    }
}

fn check_rows<T, U>(a: &[Vec<T>], b: &[Vec<U>]) -> Result<usize, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::Shape(format!("{} rows vs {} rows", a.len(), b.len())));
    }
    let k = a.first().map_or(0, Vec::len);
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        if x.len() != k || y.len() != k {
            return Err(MetricsError::Shape(format!("row {i} has width {} / {}, expected {k}", x.len(), y.len())));
        }
    }
    Ok(k)
}

/// Per-label counts of an `N × K` decision matrix against labels.
pub fn confusion(decisions: &[Vec<bool>], labels: &[Vec<bool>]) -> Result<ConfusionCounts, MetricsError> {
    let k = check_rows(decisions, labels)?;
    let mut per_label = vec![LabelCounts::default(); k];
    for (d_row, y_row) in decisions.iter().zip(labels) {
        for ((c, &d), &y) in per_label.iter_mut().zip(d_row).zip(y_row) {
            match (d, y) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
    }
    Ok(ConfusionCounts { per_label })
}

/// Pooled F1 across labels.
pub fn micro_f1(counts: &ConfusionCounts) -> f64 {
    counts.pooled().f1()
}

/// How macro averaging treats labels with `tp = fp = fn = 0`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyLabelPolicy {
    /// Leave them out of the average.
    #[default]
    Skip,
    /// Refuse to average when any label is empty.
    Error,
}

/// Mean of per-label F1.
pub fn macro_f1(counts: &ConfusionCounts, policy: EmptyLabelPolicy) -> Result<f64, MetricsError> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, c) in counts.per_label.iter().enumerate() {
        if c.is_empty_label() {
            match policy {
                EmptyLabelPolicy::Skip => continue,
                EmptyLabelPolicy::Error => {
                    return Err(MetricsError::Undefined(format!("label {i} has no positives and no predictions")))
                }
            }
        }
        sum += c.f1();
        n += 1;
    }
    if n == 0 {
        return Err(MetricsError::Undefined("every label is empty".into()));
    }
    Ok(sum / n as f64)
}

/// Thresholds 0.05, 0.10, …, 0.95.
pub fn default_grid() -> Vec<f64> {
    (1..=19).map(|k| k as f64 / 20.0).collect()
}

/// Applies per-label thresholds: decided iff `score >= threshold`.
pub fn decide(scores: &[Vec<f64>], thresholds: &[f64]) -> Vec<Vec<bool>> {
    scores.iter().map(|row| row.iter().zip(thresholds).map(|(s, t)| s >= t).collect()).collect()
}

/// Per label, the grid value with the best F1 on `(scores, labels)`;
/// ties go to the smallest threshold.
pub fn tune_thresholds(scores: &[Vec<f64>], labels: &[Vec<bool>], grid: &[f64]) -> Result<Vec<f64>, MetricsError> {
    let k = check_rows(scores, labels)?;
    if grid.is_empty() || grid.iter().any(|g| !(*g > 0.0 && *g < 1.0)) {
        return Err(MetricsError::Grid("values must lie strictly inside (0, 1) and the grid must be non-empty".into()));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let mut best = (f64::NEG_INFINITY, sorted[0]);
        for &t in &sorted {
            let mut c = LabelCounts::default();
            for (row, y) in scores.iter().zip(labels) {
                match (row[j] >= t, y[j]) {
                    (true, true) => c.tp += 1,
                    (true, false) => c.fp += 1,
                    (false, true) => c.fn_ += 1,
                    (false, false) => c.tn += 1,
                }
            }
            if c.f1() > best.0 {
                best = (c.f1(), t);
            }
        }
        out.push(best.1);
    }
    Ok(out)
}

/// Tuned thresholds, unless they pool to a lower micro-F1 than a uniform
/// `fallback`, in which case the uniform thresholds are returned.
pub fn select_thresholds(
    scores: &[Vec<f64>],
    labels: &[Vec<bool>],
    grid: &[f64],
    fallback: f64,
) -> Result<Vec<f64>, MetricsError> {
    let tuned = tune_thresholds(scores, labels, grid)?;
    let uniform = vec![fallback; tuned.len()];
    let f_tuned = micro_f1(&confusion(&decide(scores, &tuned), labels)?);
    let f_uniform = micro_f1(&confusion(&decide(scores, &uniform), labels)?);
    Ok(if f_tuned >= f_uniform { tuned } else { uniform })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub label: String,
    #[serde(flatten)]
    pub counts: LabelCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
}

/// Serializable summary of one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_examples: u64,
    pub pooled: LabelCounts,
    pub micro: Prf,
    /// `None` when every label is empty.
    pub macro_avg: Option<Prf>,
    pub labels: Vec<LabelReport>,
}

impl MetricsReport {
    pub fn new(names: &[String], counts: &ConfusionCounts, thresholds: &[f64]) -> Result<Self, MetricsError> {
        if names.len() != counts.n_labels() || thresholds.len() != counts.n_labels() {
            return Err(MetricsError::Shape("names, counts and thresholds must align".into()));
        }
        let pooled = counts.pooled();
        let active: Vec<&LabelCounts> = counts.per_label.iter().filter(|c| !c.is_empty_label()).collect();
        let macro_avg = (!active.is_empty()).then(|| {
            let n = active.len() as f64;
            Prf {
                precision: active.iter().map(|c| c.precision()).sum::<f64>() / n,
                recall: active.iter().map(|c| c.recall()).sum::<f64>() / n,
                f1: active.iter().map(|c| c.f1()).sum::<f64>() / n,
            }
        });
        Ok(Self {
            n_examples: counts.per_label.first().map_or(0, LabelCounts::total),
            pooled,
            micro: Prf { precision: pooled.precision(), recall: pooled.recall(), f1: pooled.f1() },
            macro_avg,
            labels: names
                .iter()
                .zip(&counts.per_label)
                .zip(thresholds)
                .map(|((n, c), &t)| LabelReport {
                    label: n.clone(),
                    counts: *c,
                    precision: c.precision(),
                    recall: c.recall(),
                    f1: c.f1(),
                    threshold: t,
                })
                .collect(),
        })
    }
}
