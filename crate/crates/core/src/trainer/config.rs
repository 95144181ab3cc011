use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::corpus::{BalanceLevel, SplitRatios};
use crate::embed::ProviderConfig;
use crate::model::{Aggregation, ArchConfig};
use crate::nn::AdamConfig;

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Stop after this many consecutive epochs without a validation gain.
    pub patience: usize,
    pub adam: AdamConfig,
    pub augment_copies: usize,
    pub balance_ratio: f64,
    pub balance_level: BalanceLevel,
    /// Epochs during which code-model convolutions stay at their
    /// transferred values.
    pub freeze_epochs: usize,
    /// Initialize code models from the chapter model and feed them its
    /// note-level output.
    pub transfer: bool,
    /// Chapter-negative examples per chapter-positive one for code models.
    pub negative_ratio: f64,
    pub arch: ArchConfig,
    pub embedding: ProviderConfig,
    pub aggregation: Aggregation,
    pub chapter_gate: f64,
    pub tune_thresholds: bool,
    pub threshold_grid: Vec<f64>,
    pub split: SplitRatios,
    pub min_token_count: usize,
    pub label_space_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let arch = ArchConfig::default();
        Self {
            epochs: 20,
            batch_size: 32,
            seed: 7,
            patience: 3,
            adam: AdamConfig::default(),
            augment_copies: 2,
            balance_ratio: 1.5,
            balance_level: BalanceLevel::Code,
            freeze_epochs: 1,
            transfer: true,
            negative_ratio: 1.0,
            embedding: ProviderConfig::hashed(arch.embed_dim, 7),
            arch,
            aggregation: Aggregation::Max,
            chapter_gate: 0.5,
            tune_thresholds: true,
            threshold_grid: crate::metrics::default_grid(),
            split: SplitRatios::default(),
            min_token_count: 1,
            label_space_path: None,
        }
    }
}

impl TrainConfig {
    /// Sized for a single CPU core: width-1 filters over 128-d hashed
    /// embeddings, no hidden layer, a larger learning rate with weight decay.
    pub fn desk() -> Self {
        let arch = ArchConfig { embed_dim: 128, chunk_len: 128, kernel_widths: vec![1], filters_per_width: 192, hidden: None };
        Self {
            epochs: 20,
            patience: 6,
            freeze_epochs: 4,
            adam: AdamConfig { lr: 0.02, weight_decay: 0.2, ..AdamConfig::default() },
            embedding: ProviderConfig::hashed(arch.embed_dim, 7),
            arch,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: &str| Err(TrainError::Config(m.into()));
        if self.epochs < 1 {
            return fail("epochs must be ≥ 1");
        }
        if self.batch_size < 1 {
            return fail("batch_size must be ≥ 1");
        }
        if !(self.balance_ratio >= 1.0) {
            return fail("balance_ratio must be ≥ 1");
        }
        if !(self.negative_ratio >= 0.0) {
            return fail("negative_ratio must be ≥ 0");
        }
        if !(self.chapter_gate > 0.0 && self.chapter_gate < 1.0) {
            return fail("chapter_gate must lie strictly inside (0, 1)");
        }
        if self.threshold_grid.is_empty() || self.threshold_grid.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return fail("threshold grid values must lie strictly inside (0, 1)");
        }
        if self.embedding.dim != self.arch.embed_dim {
            return fail("embedding dim must equal arch.embed_dim");
        }
        self.adam.validate().map_err(|e| TrainError::Config(e.to_string()))?;
        self.embedding.validate().map_err(|e| TrainError::Config(e.to_string()))?;
        self.split.validate().map_err(|e| TrainError::Config(e.to_string()))?;
        Ok(())
    }
}

/// Data treatment applied to the training split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Baseline,
    Balance,
    Augment,
    BalanceAugment,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Baseline, Variant::Balance, Variant::Augment, Variant::BalanceAugment];

    pub fn balances(self) -> bool {
        matches!(self, Variant::Balance | Variant::BalanceAugment)
    }

    pub fn augments(self) -> bool {
        matches!(self, Variant::Augment | Variant::BalanceAugment)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Balance => "+balance",
            Variant::Augment => "+augment",
            Variant::BalanceAugment => "+balance+augment",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s.trim() || v.name().trim_start_matches('+') == s.trim())
            .ok_or_else(|| TrainError::Config(format!("unknown variant {s:?}")))
    }
}

impl Serialize for Variant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Variant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ordered list of variants to train.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationPlan {
    pub variants: Vec<Variant>,
}

impl AblationPlan {
    pub fn new(variants: Vec<Variant>) -> Result<Self, TrainError> {
        if variants.is_empty() {
            return Err(TrainError::Config("ablation plan must name at least one variant".into()));
        }
        Ok(Self { variants })
    }

    /// baseline, +balance, +augment, +balance+augment.
    pub fn full() -> Self {
        Self { variants: Variant::ALL.to_vec() }
    }
}
