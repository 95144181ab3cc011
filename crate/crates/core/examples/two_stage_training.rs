//! Trains the chapter model and the per-chapter code models on a synthetic
//! corpus and reports validation micro-F1 for both layers.
//!
//! cargo run --release --example two_stage_training -- [n_notes] [seed] [config.json]

use std::time::Instant;

use chartcode::corpus::{prepare_corpus, synthesize, SynthSpec};
use chartcode::preprocess::AbbreviationTable;
use chartcode::trainer::{train_pipeline, TrainConfig, Variant};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let n_notes = args.next().map_or(Ok(2000), |s| s.parse())?;
    let seed = args.next().map_or(Ok(7), |s| s.parse())?;

    let corpus = synthesize(&SynthSpec { n_notes, seed, ..SynthSpec::default() })?;
    let base = match args.next() {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => TrainConfig::desk(),
    };
    let cfg = TrainConfig { seed, ..base };
    let prepared = prepare_corpus(
        &corpus.notes,
        &corpus.label_records(),
        &corpus.label_space,
        AbbreviationTable::builtin(),
        cfg.arch.chunk_len,
        cfg.min_token_count,
        &cfg.split,
        seed,
    )?;
    let s = &prepared.splits;
    println!("train {} / validation {} / test {}", s.train.len(), s.validation.len(), s.test.len());

    let start = Instant::now();
    let out = train_pipeline(s, &corpus.label_space, &prepared.preprocessor, &cfg, Variant::Baseline)?;
    println!("trained in {:.1}s", start.elapsed().as_secs_f64());
    println!("chapter epochs: {}", out.history.chapter.len());
    println!("validation chapter micro-F1 {:.4}", out.validation.chapter_micro_f1);
    println!("validation code micro-F1    {:.4}", out.validation.code_micro_f1);
    println!("{:<28} {:>4} {:>4} {:>4} {:>6} {:>5}", "chapter", "tp", "fp", "fn", "f1", "thr");
    for l in &out.validation.chapters.labels {
        println!(
            "{:<28} {:>4} {:>4} {:>4} {:>6.3} {:>5.2}",
            l.label, l.counts.tp, l.counts.fp, l.counts.fn_, l.f1, l.threshold
        );
    }
    if let Some(t) = &out.test {
        println!("test chapter micro-F1 {:.4}, code micro-F1 {:.4}", t.chapter_micro_f1, t.code_micro_f1);
    }
    Ok(())
}
