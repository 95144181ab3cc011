//! Undersamples a skewed training split toward a target positive-count ratio,
//! then adds sentence-shuffled copies of each kept note.
//!
//! cargo run --example balance_and_augment -- [target_ratio] [copies]

use chartcode::corpus::{
    augment_shuffle, label_counts, prepare_corpus, synthesize, undersample_with_report, BalanceConfig, SynthSpec,
};
use chartcode::preprocess::AbbreviationTable;
use chartcode::trainer::TrainConfig;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let ratio: f64 = args.next().map_or(Ok(2.0), |s| s.parse())?;
    let copies: usize = args.next().map_or(Ok(2), |s| s.parse())?;

    let corpus = synthesize(&SynthSpec { n_notes: 800, seed: 11, ..SynthSpec::default() })?;
    let cfg = TrainConfig::desk();
    let prepared = prepare_corpus(
        &corpus.notes,
        &corpus.label_records(),
        &corpus.label_space,
        AbbreviationTable::builtin(),
        cfg.arch.chunk_len,
        cfg.min_token_count,
        &cfg.split,
        11,
    )?;
    let train = &prepared.splits.train;

    let (kept, report) = undersample_with_report(train, &BalanceConfig::new(ratio, 11));
    println!("code positives before: {:?}", report.counts_before);
    println!("code positives after:  {:?}", report.counts_after);
    println!(
        "kept {} of {} notes, cap {}, achieved ratio {:.2} (target {ratio}, reached: {})",
        kept.len(),
        train.len(),
        report.cap,
        report.achieved_ratio,
        report.reached_target()
    );

    let pre = &prepared.preprocessor;
    let mut augmented = kept.clone();
    for ex in &kept {
        augmented.extend(augment_shuffle(ex, &ex.sentences, copies, 11, &pre.vocab, pre.chunk_len));
    }
    let rows: Vec<Vec<bool>> = augmented.iter().map(|e| e.chapter_labels.clone()).collect();
    println!("after {copies} shuffled copies each: {} notes, chapter positives {:?}", augmented.len(), label_counts(&rows));

    let original = &kept[0];
    let copy = &augmented[kept.len()];
    println!("\n{} sentence order:", original.note_id);
    for s in original.sentences.iter().take(4) {
        println!("  {s}");
    }
    println!("{} sentence order:", copy.note_id);
    for s in copy.sentences.iter().take(4) {
        println!("  {s}");
    }
    Ok(())
}
