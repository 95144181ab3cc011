use serde::{Deserialize, Serialize};

use super::{CorpusError, Example};
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.8, validation: 0.1, test: 0.1 }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let parts = [self.train, self.validation, self.test];
        let sum: f64 = parts.iter().sum();
        if parts.iter().any(|&p| !(p > 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::BadRatios(parts));
        }
        Ok(())
    }
}

/// Split for one patient: a seeded hash of the subject id placed against the
/// cumulative ratio cut points.
pub fn assign_split(subject_id: &str, ratios: &SplitRatios, seed: u64) -> SplitKind {
    let u = util::unit_interval(util::mix(&[seed, util::fnv1a64(subject_id.as_bytes())]));
    if u < ratios.train {
        SplitKind::Train
    } else if u < ratios.train + ratios.validation {
        SplitKind::Validation
    } else {
        SplitKind::Test
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<Example>,
    pub validation: Vec<Example>,
    pub test: Vec<Example>,
}

/// Partitions examples so that every patient lands in exactly one split.
pub fn split_by_patient(
    examples: Vec<Example>,
    ratios: &SplitRatios,
    seed: u64,
) -> Result<Splits, CorpusError> {
    ratios.validate()?;
    let mut out = Splits::default();
    for ex in examples {
        match assign_split(&ex.subject_id, ratios, seed) {
            SplitKind::Train => out.train.push(ex),
            SplitKind::Validation => out.validation.push(ex),
            SplitKind::Test => out.test.push(ex),
        }
    }
    Ok(out)
}
