//! Trains a small bundle, saves it, loads it back and predicts codes for a
//! note, showing the chapter gate and the reported codes.
//!
//! cargo run --release --example predict_note

use chartcode::corpus::{prepare_corpus, synthesize, SynthSpec};
use chartcode::model::{predict_note, ModelBundle};
use chartcode::preprocess::AbbreviationTable;
use chartcode::trainer::{train_pipeline, TrainConfig, Variant};

fn main() -> anyhow::Result<()> {
    let corpus = synthesize(&SynthSpec { n_notes: 1000, seed: 21, ..SynthSpec::default() })?;
    let mut cfg = TrainConfig { seed: 21, epochs: 10, patience: 10, ..TrainConfig::desk() };
    cfg.arch.filters_per_width = 64;
    let prepared = prepare_corpus(
        &corpus.notes,
        &corpus.label_records(),
        &corpus.label_space,
        AbbreviationTable::builtin(),
        cfg.arch.chunk_len,
        cfg.min_token_count,
        &cfg.split,
        cfg.seed,
    )?;
    let out = train_pipeline(&prepared.splits, &corpus.label_space, &prepared.preprocessor, &cfg, Variant::Baseline)?;

    let dir = std::env::temp_dir().join(format!("chartcode-example-bundle-{}", std::process::id()));
    let manifest = out.bundle.save(&dir)?;
    let bundle = ModelBundle::load(&dir)?;
    println!("bundle saved to {} (fingerprint {})", dir.display(), manifest.fingerprint);

    let note = &corpus.notes[0];
    let provider = bundle.embedding.build()?;
    let mut result = predict_note(&note.text, &bundle, provider.as_ref())?;
    result.sort_codes_by_score();
    println!("\nnote {}: true codes {:?}", note.note_id, corpus.codes[&note.note_id]);
    println!("chapters with a positive decision (code models run when the score is at least {}):", bundle.chapter_gate);
    for c in result.chapters.iter().filter(|c| c.decided) {
        println!("  {:>2} {:<48} {:.3} threshold {:.2}", c.id, c.name, c.score, bundle.thresholds[c.id]);
    }
    println!("reported codes (best first):");
    for c in result.codes.iter().take(8) {
        println!("  {:<7} {:.3} {}", c.code, c.score, if c.decided { "decided" } else { "" });
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
