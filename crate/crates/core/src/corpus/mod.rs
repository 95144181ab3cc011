//! Labeled examples and the corpus-level treatments applied before training:
//! label space construction, undersampling, sentence-shuffle augmentation,
//! patient-level splitting and synthetic corpus generation.

mod augment;
mod balance;
mod labels;
mod split;
mod synth;

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::{AbbreviationTable, Preprocessor, RawNote, SentenceList, TokenChunk, Vocabulary};

pub use augment::{augment_shuffle, permutation_seed};
pub use balance::{
    undersample, undersample_indices, undersample_with_report, BalanceConfig, BalanceLevel,
    UndersampleReport,
};
pub use labels::{
    map_code_to_chapter, select_top_codes, Chapter, CodeFamily, CodeLabel, CodeRange, Icd9Code,
    LabelSpace, DEFAULT_CHAPTERS_COUNT, DEFAULT_CODES_COUNT,
};
pub use split::{assign_split, split_by_patient, SplitKind, SplitRatios, Splits};
pub use synth::{default_marginals, synthesize, SynthCorpus, SynthSpec, CODE_POOL};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed ICD-9 code {0:?}")]
    MalformedCode(String),
    #[error("code {0:?} falls in no configured chapter range")]
    UnmappedCode(String),
    #[error("malformed code range {0:?}")]
    MalformedRange(String),
    #[error("invalid label space: {0}")]
    InvalidLabelSpace(String),
    #[error("split ratios must be positive and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
    #[error("invalid synthetic corpus spec: {0}")]
    InvalidSynthSpec(String),
    #[error("labels line {line}: {source}")]
    Jsonl { line: usize, source: serde_json::Error },
    #[error("note {0:?} has no label record")]
    MissingLabels(String),
    #[error(transparent)]
    Preprocess(#[from] crate::preprocess::PreprocessError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A preprocessed note with its multi-hot chapter and code labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub note_id: String,
    pub subject_id: String,
    pub sentences: SentenceList,
    pub chunks: Vec<TokenChunk>,
    pub chapter_labels: Vec<bool>,
    pub code_labels: Vec<bool>,
}

impl Example {
    /// Chapter labels contain the chapter of every positive code.
    pub fn is_chapter_closed(&self, space: &LabelSpace) -> bool {
        space
            .codes()
            .iter()
            .zip(&self.code_labels)
            .all(|(c, &on)| !on || self.chapter_labels[c.chapter_id])
    }
}

/// One line of the labeled-corpus JSONL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub note_id: String,
    pub subject_id: String,
    pub codes: Vec<String>,
}

pub fn read_labels(reader: impl BufRead) -> Result<Vec<LabelRecord>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| CorpusError::Jsonl { line: i + 1, source })?,
        );
    }
    Ok(out)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<LabelRecord>, CorpusError> {
    read_labels(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn write_labels(mut w: impl Write, records: &[LabelRecord]) -> Result<(), CorpusError> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

impl SynthCorpus {
    /// Label records in note order.
    pub fn label_records(&self) -> Vec<LabelRecord> {
        self.notes
            .iter()
            .map(|n| LabelRecord {
                note_id: n.note_id.clone(),
                subject_id: n.subject_id.clone(),
                codes: self.codes[&n.note_id].clone(),
            })
            .collect()
    }
}

/// Preprocesses notes and attaches labels. Notes that are empty after
/// cleaning are skipped; their ids are returned separately.
pub fn build_examples(
    notes: &[RawNote],
    labels: &[LabelRecord],
    space: &LabelSpace,
    pre: &Preprocessor,
) -> Result<(Vec<Example>, Vec<String>), CorpusError> {
    let by_id: HashMap<&str, &LabelRecord> = labels.iter().map(|r| (r.note_id.as_str(), r)).collect();
    let mut examples = Vec::with_capacity(notes.len());
    let mut skipped = Vec::new();
    for note in notes {
        let rec = by_id
            .get(note.note_id.as_str())
            .ok_or_else(|| CorpusError::MissingLabels(note.note_id.clone()))?;
        let processed = pre.process(&note.text);
        if processed.chunks.is_empty() {
            skipped.push(note.note_id.clone());
            continue;
        }
        let (chapter_labels, code_labels) = space.encode(&rec.codes)?;
        examples.push(Example {
            note_id: note.note_id.clone(),
            subject_id: note.subject_id.clone(),
            sentences: processed.sentences,
            chunks: processed.chunks,
            chapter_labels,
            code_labels,
        });
    }
    Ok((examples, skipped))
}

/// Per-code occurrence counts over label records.
pub fn code_counts(labels: &[LabelRecord]) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for r in labels {
        for c in &r.codes {
            *counts.entry(c.clone()).or_insert(0) += 1;
        }
    }
    counts
}

/// Positive count per label column.
pub fn label_counts(rows: &[Vec<bool>]) -> Vec<usize> {
    let width = rows.first().map_or(0, Vec::len);
    rows.iter().fold(vec![0; width], |mut acc, r| {
        for (a, &on) in acc.iter_mut().zip(r) {
            *a += usize::from(on);
        }
        acc
    })
}

/// Subject id → number of examples, used for split reports.
pub fn patients(examples: &[Example]) -> BTreeMap<&str, usize> {
    let mut m = BTreeMap::new();
    for e in examples {
        *m.entry(e.subject_id.as_str()).or_insert(0) += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{AbbreviationTable, Vocabulary};

    #[test]
    fn synthetic_corpus_builds_closed_examples() {
        let corpus = synthesize(&SynthSpec { n_notes: 200, ..SynthSpec::default() }).unwrap();
        let vocab = Vocabulary::build(corpus.notes.iter().map(|n| n.text.as_str()), 1, None);
        let pre = Preprocessor::new(AbbreviationTable::builtin(), vocab, 128).unwrap();
        let (examples, skipped) =
            build_examples(&corpus.notes, &corpus.label_records(), &corpus.label_space, &pre).unwrap();
        assert!(skipped.is_empty());
        assert_eq!(examples.len(), 200);
        assert!(examples.iter().all(|e| e.is_chapter_closed(&corpus.label_space)));
        assert!(examples.iter().all(|e| e.chunks.iter().all(|c| c.validate(128).is_ok())));
    }

    #[test]
    fn label_jsonl_round_trip() {
        let recs = vec![LabelRecord { note_id: "1".into(), subject_id: "a".into(), codes: vec!["428.0".into()] }];
        let mut buf = Vec::new();
        write_labels(&mut buf, &recs).unwrap();
        assert_eq!(read_labels(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn missing_label_record_is_an_error() {
        let notes = vec![RawNote { note_id: "x".into(), subject_id: "s".into(), hadm_id: String::new(), text: "a".into() }];
        let space = LabelSpace::with_default_chapters(&[]).unwrap();
        let pre = Preprocessor::new(AbbreviationTable::default(), Vocabulary::build(["a"], 1, None), 8).unwrap();
        assert!(matches!(build_examples(&notes, &[], &space, &pre), Err(CorpusError::MissingLabels(_))));
    }
}

/// Patient-level splits plus the preprocessor they were encoded with.
#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub splits: Splits,
    pub preprocessor: Preprocessor,
    /// Notes dropped because nothing survived cleaning.
    pub skipped: Vec<String>,
}

/// Splits notes by patient, builds the vocabulary from training-split notes
/// only, and encodes every split with it.
#[allow(clippy::too_many_arguments)]
pub fn prepare_corpus(
    notes: &[RawNote],
    labels: &[LabelRecord],
    space: &LabelSpace,
    abbreviations: AbbreviationTable,
    chunk_len: usize,
    min_token_count: usize,
    ratios: &SplitRatios,
    seed: u64,
) -> Result<PreparedCorpus, CorpusError> {
    ratios.validate()?;
    let train_sentences: Vec<SentenceList> = notes
        .iter()
        .filter(|n| assign_split(&n.subject_id, ratios, seed) == SplitKind::Train)
        .map(|n| crate::preprocess::clean_and_split(&n.text, &abbreviations))
        .collect();
    let vocab = Vocabulary::build(
        train_sentences.iter().flat_map(|s| s.0.iter().map(String::as_str)),
        min_token_count,
        None,
    );
    let preprocessor = Preprocessor::new(abbreviations, vocab, chunk_len)?;
    let (examples, skipped) = build_examples(notes, labels, space, &preprocessor)?;
    let splits = split_by_patient(examples, ratios, seed)?;
    Ok(PreparedCorpus { splits, preprocessor, skipped })
}
