//! Greedy label-balancing by example removal.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Example;
use crate::util;

/// Which label vector drives the balancing pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceLevel {
    Chapter,
    #[default]
    Code,
    /// Chapter and code labels concatenated.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceConfig {
    /// Target ratio between the largest and smallest positive count (≥ 1).
    pub target_ratio: f64,
    pub seed: u64,
    #[serde(default)]
    pub level: BalanceLevel,
}

impl BalanceConfig {
    pub fn new(target_ratio: f64, seed: u64) -> Self {
        Self { target_ratio, seed, level: BalanceLevel::default() }
    }
}

/// Outcome of an undersampling pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UndersampleReport {
    /// Indices of kept examples, ascending.
    pub kept: Vec<usize>,
    pub min_positive_count: usize,
    /// Per-label positive count cap, `floor(ratio × min_positive_count)`.
    pub cap: usize,
    pub counts_before: Vec<usize>,
    pub counts_after: Vec<usize>,
    /// max / min nonzero positive count after the pass.
    pub achieved_ratio: f64,
}

impl UndersampleReport {
    /// Whether every label ended at or below the cap.
    pub fn reached_target(&self) -> bool {
        self.counts_after.iter().all(|&c| c <= self.cap)
    }
}

fn positive_counts(labels: &[Vec<bool>]) -> Vec<usize> {
    let width = labels.first().map_or(0, Vec::len);
    let mut counts = vec![0usize; width];
    for row in labels {
        for (c, &on) in counts.iter_mut().zip(row) {
            *c += usize::from(on);
        }
    }
    counts
}

fn ratio(counts: &[usize]) -> f64 {
    let nonzero = counts.iter().copied().filter(|&c| c > 0);
    match (nonzero.clone().min(), nonzero.max()) {
        (Some(lo), Some(hi)) => hi as f64 / lo as f64,
        _ => 1.0,
    }
}

/// Visits examples in seeded-random order and drops one only when it carries
/// at least one label and every label it carries is still above the cap.
/// Labels at the minimum count are therefore never touched and no label that
/// was present can disappear.
pub fn undersample_indices(labels: &[Vec<bool>], target_ratio: f64, seed: u64) -> UndersampleReport {
    assert!(target_ratio >= 1.0, "target ratio must be ≥ 1");
    let before = positive_counts(labels);
    let min_pos = before.iter().copied().filter(|&c| c > 0).min().unwrap_or(0);
    let cap = (target_ratio * min_pos as f64).floor() as usize;

    let mut counts = before.clone();
    let mut keep = vec![true; labels.len()];
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut util::rng(seed));
    for i in order {
        let row = &labels[i];
        let carries_any = row.iter().any(|&on| on);
        let removable = carries_any && row.iter().zip(&counts).all(|(&on, &c)| !on || c > cap);
        if removable {
            keep[i] = false;
            for (c, &on) in counts.iter_mut().zip(row) {
                *c -= usize::from(on);
            }
        }
    }
    let kept: Vec<usize> = (0..labels.len()).filter(|&i| keep[i]).collect();
    UndersampleReport {
        kept,
        min_positive_count: min_pos,
        cap,
        achieved_ratio: ratio(&counts),
        counts_before: before,
        counts_after: counts,
    }
}

pub(crate) fn level_labels(examples: &[Example], level: BalanceLevel) -> Vec<Vec<bool>> {
    examples
        .iter()
        .map(|e| match level {
            BalanceLevel::Chapter => e.chapter_labels.clone(),
            BalanceLevel::Code => e.code_labels.clone(),
            BalanceLevel::Both => {
                e.chapter_labels.iter().chain(&e.code_labels).copied().collect()
            }
        })
        .collect()
}

/// Undersamples examples towards `cfg.target_ratio`; returns the kept subset
/// in input order together with the pass report.
pub fn undersample_with_report(
    examples: &[Example],
    cfg: &BalanceConfig,
) -> (Vec<Example>, UndersampleReport) {
    let labels = level_labels(examples, cfg.level);
    let report = undersample_indices(&labels, cfg.target_ratio, cfg.seed);
    let kept = report.kept.iter().map(|&i| examples[i].clone()).collect();
    (kept, report)
}

pub fn undersample(examples: &[Example], cfg: &BalanceConfig) -> Vec<Example> {
    undersample_with_report(examples, cfg).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_hot(i: usize, n: usize) -> Vec<bool> {
        (0..n).map(|j| j == i).collect()
    }

    #[test]
    fn hand_trace_four_a_two_b() {
        let labels = vec![
            one_hot(0, 2),
            one_hot(0, 2),
            one_hot(1, 2),
            one_hot(0, 2),
            one_hot(1, 2),
            one_hot(0, 2),
        ];
        let r = undersample_indices(&labels, 1.0, 42);
        assert_eq!(r.counts_after, [2, 2]);
        assert_eq!(r.kept.len(), 4);
        assert!(r.kept.contains(&2) && r.kept.contains(&4));
    }

    #[test]
    fn balanced_input_is_unchanged() {
        let labels = vec![one_hot(0, 3), one_hot(1, 3), one_hot(2, 3), vec![true, true, true]];
        for ratio in [1.0, 1.5, 4.0] {
            let r = undersample_indices(&labels, ratio, 7);
            assert_eq!(r.kept, [0, 1, 2, 3]);
        }
    }

    #[test]
    fn example_carrying_minimum_label_survives() {
        let mut labels = vec![vec![true, false]; 10];
        labels.push(vec![true, true]);
        let r = undersample_indices(&labels, 1.0, 3);
        assert!(r.kept.contains(&10));
        assert_eq!(r.counts_after[1], 1);
    }

    #[test]
    fn label_free_examples_are_kept() {
        let labels = vec![vec![false, false], one_hot(0, 2), one_hot(0, 2), one_hot(1, 2)];
        let r = undersample_indices(&labels, 1.0, 0);
        assert!(r.kept.contains(&0));
        assert_eq!(r.counts_after, [1, 1]);
    }

    #[test]
    fn deterministic_for_seed() {
        let labels: Vec<_> = (0..50).map(|i| one_hot(i % 3 % 2, 2)).collect();
        assert_eq!(undersample_indices(&labels, 1.0, 9), undersample_indices(&labels, 1.0, 9));
    }

    proptest! {
        #[test]
        fn monotone_and_never_empties(
            rows in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 4), 1..60),
            ratio in 1.0f64..3.0,
            seed in any::<u64>(),
        ) {
            let r = undersample_indices(&rows, ratio, seed);
            for (b, a) in r.counts_before.iter().zip(&r.counts_after) {
                prop_assert!(a <= b);
                prop_assert!(*b == 0 || *a > 0);
            }
            prop_assert!(r.kept.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
