//! Raw clinical note text → clean sentences → fixed-length token chunks.
//!
//! The pipeline is: [`strip_deid`] removes `[** ... **]` placeholders,
//! [`expand_abbreviations`] rewrites clinical shorthand, [`split_sentences`]
//! finds sentence boundaries and [`chunk_and_tokenize`] packs sentences into
//! [`TokenChunk`]s of `chunk_len` tokens (128 by default).

mod abbrev;
mod chunk;
mod deid;
mod sentences;
mod vocab;

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use abbrev::{expand_abbreviations, AbbreviationTable};
pub use chunk::{chunk_and_tokenize, TokenChunk};
pub use deid::strip_deid;
pub use sentences::{split_sentences, SentenceList};
pub use vocab::{word_tokens, Vocabulary, PAD_ID, PAD_TOKEN, UNK_ID, UNK_TOKEN};

pub const DEFAULT_CHUNK_LEN: usize = 128;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("abbreviation key is empty")]
    EmptyAbbreviation,
    #[error("duplicate abbreviation key {0:?}")]
    DuplicateAbbreviation(String),
    #[error("malformed abbreviation TSV at line {line}: expected key<TAB>expansion")]
    MalformedTsv { line: usize },
    #[error("invalid vocabulary: {0}")]
    BadVocabulary(String),
    #[error("chunk length must be at least 2, got {0}")]
    ChunkLength(usize),
    #[error("invalid chunk: {0}")]
    InvalidChunk(String),
    #[error("corpus line {line}: {source}")]
    Jsonl { line: usize, source: serde_json::Error },
    #[error("duplicate note id {0:?}")]
    DuplicateNote(String),
    #[error("note id is empty (line {0})")]
    EmptyNoteId(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One note as stored in the corpus JSONL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawNote {
    pub note_id: String,
    pub subject_id: String,
    #[serde(default)]
    pub hadm_id: String,
    pub text: String,
}

/// Reads one [`RawNote`] per line. Note ids must be non-empty and unique.
pub fn read_notes(reader: impl BufRead) -> Result<Vec<RawNote>, PreprocessError> {
    let mut seen = std::collections::HashSet::new();
    let mut notes = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let note: RawNote = serde_json::from_str(&line)
            .map_err(|source| PreprocessError::Jsonl { line: i + 1, source })?;
        if note.note_id.is_empty() {
            return Err(PreprocessError::EmptyNoteId(i + 1));
        }
        if !seen.insert(note.note_id.clone()) {
            return Err(PreprocessError::DuplicateNote(note.note_id));
        }
        notes.push(note);
    }
    Ok(notes)
}

pub fn load_notes(path: impl AsRef<Path>) -> Result<Vec<RawNote>, PreprocessError> {
    let f = std::fs::File::open(path)?;
    read_notes(std::io::BufReader::new(f))
}

pub fn write_notes(mut w: impl Write, notes: &[RawNote]) -> Result<(), PreprocessError> {
    for n in notes {
        serde_json::to_writer(&mut w, n).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// De-identification stripping followed by abbreviation expansion and
/// sentence splitting.
pub fn clean_and_split(text: &str, table: &AbbreviationTable) -> SentenceList {
    let stripped = strip_deid(text);
    let expanded = expand_abbreviations(&stripped, table);
    split_sentences(&expanded)
}

/// Cleaned sentences and their chunks for one note.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessedNote {
    pub sentences: SentenceList,
    pub chunks: Vec<TokenChunk>,
}

impl ProcessedNote {
    /// Text covered by chunk `i`, sentences joined by single spaces.
    pub fn chunk_text(&self, i: usize) -> String {
        let (a, b) = self.chunks[i].source_sentence_range;
        self.sentences.as_slice()[a..b].join(" ")
    }
}

/// Immutable preprocessing configuration shared by training and inference.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    pub abbreviations: AbbreviationTable,
    pub vocab: Vocabulary,
    pub chunk_len: usize,
}

impl Preprocessor {
    pub fn new(
        abbreviations: AbbreviationTable,
        vocab: Vocabulary,
        chunk_len: usize,
    ) -> Result<Self, PreprocessError> {
        if chunk_len < 2 {
            return Err(PreprocessError::ChunkLength(chunk_len));
        }
        Ok(Self { abbreviations, vocab, chunk_len })
    }

    pub fn sentences(&self, text: &str) -> SentenceList {
        clean_and_split(text, &self.abbreviations)
    }

    pub fn chunk(&self, sentences: &SentenceList) -> Vec<TokenChunk> {
        chunk_and_tokenize(sentences, &self.vocab, self.chunk_len)
            .expect("chunk length validated at construction")
    }

    pub fn process(&self, text: &str) -> ProcessedNote {
        let sentences = self.sentences(text);
        let chunks = self.chunk(&sentences);
        ProcessedNote { sentences, chunks }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn end_to_end_cleaning() {
        let table = AbbreviationTable::new([("pt", "patient"), ("sob", "shortness of breath")]).unwrap();
        let s = clean_and_split("Pt seen by Dr. [**Name**] for sob. Given O2.\n\nPlan: home", &table);
        assert_eq!(
            s.0,
            ["patient seen by Dr. for shortness of breath.", "Given O2.", "Plan: home"]
        );
    }

    #[test]
    fn reads_jsonl_and_rejects_duplicates() {
        let src = r#"{"note_id":"1","subject_id":"a","hadm_id":"","text":"x"}
{"note_id":"2","subject_id":"a","text":"y"}
"#;
        let notes = read_notes(src.as_bytes()).unwrap();
        assert_eq!(notes.len(), 2);
        assert_eq!(notes[1].hadm_id, "");

        let dup = r#"{"note_id":"1","subject_id":"a","text":"x"}
{"note_id":"1","subject_id":"b","text":"y"}"#;
        assert!(matches!(read_notes(dup.as_bytes()), Err(PreprocessError::DuplicateNote(_))));
        assert!(matches!(
            read_notes("{bad".as_bytes()),
            Err(PreprocessError::Jsonl { line: 1, .. })
        ));
    }

    #[test]
    fn processing_is_deterministic() {
        let vocab = Vocabulary::build(["chest pain given aspirin ."], 1, None);
        let p = Preprocessor::new(AbbreviationTable::builtin(), vocab, 4).unwrap();
        let a = p.process("Chest pain. Given aspirin. Chest pain again.");
        let b = p.process("Chest pain. Given aspirin. Chest pain again.");
        assert_eq!(a, b);
        assert_eq!(a.chunks.len(), 3);
        assert_eq!(a.chunk_text(1), "Given aspirin.");
    }
}
