//! Rule-based sentence boundary detection for clinical notes.

use serde::{Deserialize, Serialize};

/// Tokens ending in `.` that never end a sentence.
const GUARD: &[&str] = &[
    "dr.", "mr.", "mrs.", "ms.", "mg.", "mcg.", "ml.", "q.d.", "b.i.d.", "t.i.d.", "q.i.d.",
    "p.o.", "p.r.n.", "q.h.s.", "e.g.", "i.e.", "vs.", "no.", "st.", "approx.", "pt.", "hosp.",
    "dept.", "fig.", "sr.", "jr.",
];

/// Sentences of one note, in source order. None is empty after trimming.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SentenceList(pub Vec<String>);

impl SentenceList {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }
}

impl From<Vec<String>> for SentenceList {
    fn from(v: Vec<String>) -> Self {
        Self(v)
    }
}

/// Splits cleaned text into sentences.
///
/// Boundaries fall at `.`, `!` or `?` followed by whitespace and an uppercase
/// letter or digit, at blank lines, and before list markers (`-`, `*`, `•`,
/// `1.`, `1)`) that start a line. Every boundary sits inside a whitespace
/// run, so joining the sentences with single spaces gives back the
/// whitespace-normalized input.
pub fn split_sentences(text: &str) -> SentenceList {
    let bytes = text.as_bytes();
    let mut cuts: Vec<usize> = Vec::new();

    for (pos, c) in text.char_indices() {
        match c {
            '.' | '!' | '?' => {
                let next = pos + 1;
                if next < bytes.len()
                    && starts_with_ws(&text[next..])
                    && next_word_opens_sentence(&text[next..])
                    && !(c == '.' && guarded(text, pos))
                {
                    cuts.push(next);
                }
            }
            '\n' => {
                let rest = &text[pos + 1..];
                let line = rest.split('\n').next().unwrap_or("");
                let blank_line = line.trim().is_empty() && rest.contains('\n');
                if blank_line || starts_list_item(line.trim_start()) {
                    cuts.push(pos);
                }
            }
            _ => {}
        }
    }
    cuts.sort_unstable();
    cuts.dedup();

    let mut sentences = Vec::new();
    let mut start = 0;
    for cut in cuts.into_iter().chain(std::iter::once(text.len())) {
        let piece = normalize_ws(&text[start..cut]);
        if !piece.is_empty() {
            sentences.push(piece);
        }
        start = cut;
    }
    SentenceList(sentences)
}

fn starts_with_ws(s: &str) -> bool {
    s.chars().next().is_some_and(char::is_whitespace)
}

fn next_word_opens_sentence(s: &str) -> bool {
    s.trim_start()
        .chars()
        .next()
        .is_some_and(|c| c.is_uppercase() || c.is_ascii_digit())
}

fn guarded(text: &str, dot: usize) -> bool {
    let head = &text[..=dot];
    let word_start = head
        .rfind(char::is_whitespace)
        .map_or(0, |i| i + head[i..].chars().next().map_or(1, char::len_utf8));
    let word = head[word_start..].trim_start_matches(['(', '"', '\'']).to_lowercase();
    if GUARD.contains(&word.as_str()) {
        return true;
    }
    // single-letter initials such as "J."
    let mut chars = word.chars();
    matches!((chars.next(), chars.next(), chars.next()), (Some(a), Some('.'), None) if a.is_alphabetic())
}

fn starts_list_item(line: &str) -> bool {
    let mut chars = line.chars();
    match chars.next() {
        Some('-' | '*' | '•') => chars.next().is_some_and(char::is_whitespace),
        Some(c) if c.is_ascii_digit() => {
            let rest = line.trim_start_matches(|c: char| c.is_ascii_digit());
            let mut r = rest.chars();
            matches!(r.next(), Some('.' | ')')) && r.next().is_some_and(char::is_whitespace)
        }
        _ => false,
    }
}

pub(crate) fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
