#![allow(dead_code)]

use chartcode::corpus::{prepare_corpus, synthesize, PreparedCorpus, SynthCorpus, SynthSpec};
use chartcode::embed::ProviderConfig;
use chartcode::model::ArchConfig;
use chartcode::nn::AdamConfig;
use chartcode::preprocess::AbbreviationTable;
use chartcode::trainer::{train_pipeline, TrainConfig, TrainOutcome, Variant};

/// Small enough to train in well under a second.
pub fn tiny_config(seed: u64) -> TrainConfig {
    let arch = ArchConfig { embed_dim: 16, chunk_len: 32, kernel_widths: vec![1, 2], filters_per_width: 8, hidden: Some(8) };
    TrainConfig {
        seed,
        epochs: 2,
        patience: 2,
        freeze_epochs: 1,
        adam: AdamConfig { lr: 0.01, ..AdamConfig::default() },
        embedding: ProviderConfig::hashed(arch.embed_dim, 3),
        arch,
        ..TrainConfig::default()
    }
}

pub fn corpus(n_notes: usize, seed: u64) -> SynthCorpus {
    synthesize(&SynthSpec { n_notes, seed, ..SynthSpec::default() }).unwrap()
}

pub fn prepare(c: &SynthCorpus, cfg: &TrainConfig) -> PreparedCorpus {
    prepare_corpus(
        &c.notes,
        &c.label_records(),
        &c.label_space,
        AbbreviationTable::builtin(),
        cfg.arch.chunk_len,
        cfg.min_token_count,
        &cfg.split,
        cfg.seed,
    )
    .unwrap()
}

pub fn train(c: &SynthCorpus, cfg: &TrainConfig) -> TrainOutcome {
    let p = prepare(c, cfg);
    train_pipeline(&p.splits, &c.label_space, &p.preprocessor, cfg, Variant::Baseline).unwrap()
}

/// A trained tiny bundle and the corpus it came from.
pub fn tiny_bundle(seed: u64) -> (SynthCorpus, TrainOutcome) {
    let c = corpus(300, seed);
    let out = train(&c, &tiny_config(seed));
    (c, out)
}
