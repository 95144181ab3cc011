//! Generates a synthetic labeled corpus with planted keywords and prints
//! how often each chapter and code occurs.
//!
//! cargo run --example synth_corpus -- [n_notes] [seed]

use chartcode::corpus::{label_counts, synthesize, SynthSpec, CODE_POOL};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_notes = args.next().map_or(Ok(500), |s| s.parse())?;
    let seed = args.next().map_or(Ok(7), |s| s.parse())?;
    let corpus = synthesize(&SynthSpec { n_notes, seed, ..SynthSpec::default() })?;
    let space = &corpus.label_space;
    println!("{} notes, {} chapters, {} codes", corpus.notes.len(), space.n_chapters(), space.n_codes());

    let first = &corpus.notes[0];
    println!("\nfirst note ({}):\n{}\ncodes: {:?}", first.note_id, first.text, corpus.codes[&first.note_id]);

    let mut chapter_rows = Vec::new();
    let mut code_rows = Vec::new();
    for note in &corpus.notes {
        let (ch, co) = space.encode(&corpus.codes[&note.note_id])?;
        chapter_rows.push(ch);
        code_rows.push(co);
    }

    println!("\nnotes per chapter:");
    for (chapter, n) in space.chapters().iter().zip(label_counts(&chapter_rows)) {
        println!("  {:>2} {:<48} {n:>5}", chapter.id, chapter.name);
    }

    println!("\nten most frequent codes:");
    let mut counts: Vec<(usize, usize)> = label_counts(&code_rows).into_iter().enumerate().collect();
    counts.sort_by_key(|&(_, n)| std::cmp::Reverse(n));
    for &(i, n) in counts.iter().take(10) {
        let code = &space.codes()[i].code;
        let pool = CODE_POOL.iter().position(|(c, _)| c == code).expect("synthetic codes come from the pool");
        println!("  {code:<7} {n:>5}  keywords {}", corpus.keywords[pool].join(", "));
    }
    Ok(())
}
