//! Trains every data-treatment variant (baseline, undersampling, sentence
//! shuffling, both) with the same seed and budget and prints the table.
//!
//! cargo run --release --example ablation -- [n_notes] [seed] [epochs]

use chartcode::corpus::{prepare_corpus, synthesize, SynthSpec};
use chartcode::preprocess::AbbreviationTable;
use chartcode::trainer::{run_ablation, AblationPlan, TrainConfig};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let mut args = std::env::args().skip(1);
    let n_notes = args.next().map_or(Ok(1000), |s| s.parse())?;
    let seed = args.next().map_or(Ok(3), |s| s.parse())?;
    let epochs = args.next().map_or(Ok(5), |s| s.parse())?;

    let corpus = synthesize(&SynthSpec { n_notes, seed, ..SynthSpec::default() })?;
    let mut cfg = TrainConfig { seed, epochs, patience: epochs, ..TrainConfig::desk() };
    cfg.arch.filters_per_width = 64;
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

    let table = run_ablation(&AblationPlan::full(), &prepared.splits, &corpus.label_space, &prepared.preprocessor, &cfg);
    print!("{}", table.to_csv());
    for d in &table.deltas {
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:+.4}"));
        println!("{} -> {}: chapter {}, code {}", d.from, d.to, fmt(d.chapter_delta), fmt(d.code_delta));
    }
    Ok(())
}
