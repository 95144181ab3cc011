//! Cleans one raw note: strips de-identification placeholders, expands
//! abbreviations, splits sentences and packs them into fixed-length chunks.
//!
//! cargo run --example preprocess_note

use chartcode::preprocess::{
    chunk_and_tokenize, clean_and_split, expand_abbreviations, strip_deid, AbbreviationTable, Vocabulary,
};

const NOTE: &str = "Pt is a 67 yo M admitted on [**2151-3-2**] with SOB and CP. \
Hx of HTN and DM2. Dr. [**Last Name 1234**] started abx for suspected PNA. \
Pt w/ stable vitals at d/c.";

fn main() -> anyhow::Result<()> {
    let table = AbbreviationTable::builtin();
    println!("raw:       {NOTE}");
    let stripped = strip_deid(NOTE);
    println!("stripped:  {stripped}");
    println!("expanded:  {}", expand_abbreviations(&stripped, &table));

    let sentences = clean_and_split(NOTE, &table);
    for (i, s) in sentences.iter().enumerate() {
        println!("sentence {i}: {s}");
    }

    let vocab = Vocabulary::build(sentences.iter().map(String::as_str), 1, None);
    let chunks = chunk_and_tokenize(&sentences, &vocab, 16)?;
    for (i, c) in chunks.iter().enumerate() {
        let words: Vec<&str> = c.token_ids[..c.valid_len()].iter().filter_map(|&t| vocab.token(t)).collect();
        println!(
            "chunk {i}: sentences {:?}, {} of {} positions used: {}",
            c.source_sentence_range,
            c.valid_len(),
            c.len(),
            words.join(" ")
        );
    }
    Ok(())
}
