//! Sentence-order shuffling augmentation.

use rand::seq::SliceRandom;

use super::Example;
use crate::preprocess::{chunk_and_tokenize, SentenceList, Vocabulary};
use crate::util;

/// Seed of the permutation used for copy `copy` of note `note_id`.
pub fn permutation_seed(seed: u64, note_id: &str, copy: usize) -> u64 {
    util::mix(&[seed, util::fnv1a64(note_id.as_bytes()), copy as u64])
}

/// Builds `n_copies` training copies of `example`, each with its sentences
/// permuted and re-chunked. Labels are copied unchanged.
pub fn augment_shuffle(
    example: &Example,
    sentences: &SentenceList,
    n_copies: usize,
    seed: u64,
    vocab: &Vocabulary,
    chunk_len: usize,
) -> Vec<Example> {
    (0..n_copies)
        .map(|i| {
            let mut order = sentences.0.clone();
            if order.len() > 1 {
                order.shuffle(&mut util::rng(permutation_seed(seed, &example.note_id, i)));
            }
            let shuffled = SentenceList(order);
            let chunks = chunk_and_tokenize(&shuffled, vocab, chunk_len)
                .expect("chunk length is validated by the caller");
            Example {
                note_id: format!("{}#aug{}", example.note_id, i),
                subject_id: example.subject_id.clone(),
                sentences: shuffled,
                chunks,
                chapter_labels: example.chapter_labels.clone(),
                code_labels: example.code_labels.clone(),
            }
        })
        .collect()
}
