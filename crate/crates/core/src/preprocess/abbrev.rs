use std::collections::HashSet;
use std::path::Path;

use super::PreprocessError;

const DEFAULT_TSV: &str = include_str!("../../assets/abbreviations.tsv");

/// Ordered abbreviation → plain English table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AbbreviationTable {
    entries: Vec<(String, String)>,
    // keys lowercased and sorted longest first, index into `entries`
    by_length: Vec<(Vec<char>, usize)>,
}

impl AbbreviationTable {
    pub fn new<I, K, V>(entries: I) -> Result<Self, PreprocessError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        let mut seen = HashSet::new();
        let mut list = Vec::new();
        for (k, v) in entries {
            let key: String = k.into();
            if key.trim().is_empty() {
                return Err(PreprocessError::EmptyAbbreviation);
            }
            if !seen.insert(key.to_lowercase()) {
                return Err(PreprocessError::DuplicateAbbreviation(key));
            }
            list.push((key, v.into()));
        }
        let mut by_length: Vec<(Vec<char>, usize)> = list
            .iter()
            .enumerate()
            .map(|(i, (k, _))| (k.to_lowercase().chars().collect(), i))
            .collect();
        by_length.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.1.cmp(&b.1)));
        Ok(Self { entries: list, by_length })
    }

    /// Parses `key<TAB>expansion` lines; `#` lines and blank lines are skipped.
    pub fn parse_tsv(src: &str) -> Result<Self, PreprocessError> {
        let mut entries = Vec::new();
        for (lineno, line) in src.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (key, expansion) = line
                .split_once('\t')
                .ok_or(PreprocessError::MalformedTsv { line: lineno + 1 })?;
            entries.push((key.trim().to_owned(), expansion.trim().to_owned()));
        }
        Self::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PreprocessError> {
        let src = std::fs::read_to_string(path)?;
        Self::parse_tsv(&src)
    }

    /// The table bundled with the crate.
    pub fn builtin() -> Self {
        Self::parse_tsv(DEFAULT_TSV).expect("bundled abbreviation table is valid")
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_tsv(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k}\t{v}\n"))
            .collect()
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Replaces every case-insensitive, word-bounded occurrence of a table key.
/// At any position the longest matching key wins.
pub fn expand_abbreviations(text: &str, table: &AbbreviationTable) -> String {
    if table.is_empty() || text.is_empty() {
        return text.to_owned();
    }
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let lower: Vec<char> = chars
        .iter()
        .map(|&(_, c)| {
            let mut l = c.to_lowercase();
            match (l.next(), l.next()) {
                (Some(a), None) => a,
                _ => c,
            }
        })
        .collect();

    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    let mut copied_to = 0; // byte offset already emitted
    while i < chars.len() {
        let at_boundary = i == 0 || !is_word_char(chars[i - 1].1);
        let mut matched = None;
        if at_boundary {
            for (key, idx) in &table.by_length {
                let end = i + key.len();
                if end > chars.len() || lower[i..end] != key[..] {
                    continue;
                }
                let ends_clean = end == chars.len() || !is_word_char(chars[end].1);
                // keys ending in punctuation ("w/") still must not run into a word
                if ends_clean {
                    matched = Some((end, *idx));
                    break;
                }
            }
        }
        match matched {
            Some((end, idx)) => {
                let start_byte = chars[i].0;
                out.push_str(&text[copied_to..start_byte]);
                out.push_str(&table.entries[idx].1);
                copied_to = chars.get(end).map_or(text.len(), |&(b, _)| b);
                i = end;
            }
            None => i += 1,
        }
    }
    out.push_str(&text[copied_to..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> AbbreviationTable {
        AbbreviationTable::new([
            ("pt", "patient"),
            ("sob", "shortness of breath"),
            ("w/", "with"),
        ])
        .unwrap()
    }

    #[test]
    fn expands_all_keys() {
        assert_eq!(
            expand_abbreviations("pt w/ sob", &table()),
            "patient with shortness of breath"
        );
    }

    #[test]
    fn respects_word_boundaries() {
        assert_eq!(expand_abbreviations("capture the flag", &table()), "capture the flag");
        assert_eq!(expand_abbreviations("w/o food", &table()), "w/o food");
    }

    #[test]
    fn empty_text_is_identity() {
        assert_eq!(expand_abbreviations("", &table()), "");
        let empty = AbbreviationTable::default();
        assert_eq!(expand_abbreviations("pt w/ sob", &empty), "pt w/ sob");
    }

    #[test]
    fn case_insensitive_and_longest_wins() {
        let t = AbbreviationTable::new([("s/p", "status post"), ("s", "second"), ("Pt", "patient")])
            .unwrap();
        assert_eq!(expand_abbreviations("PT s/p CABG", &t), "patient status post CABG");
    }

    #[test]
    fn leaves_other_bytes_untouched() {
        let s = "Héllo,  pt.\n\tnext";
        assert_eq!(expand_abbreviations(s, &table()), "Héllo,  patient.\n\tnext");
    }

    #[test]
    fn tsv_parsing_and_errors() {
        let t = AbbreviationTable::parse_tsv("# header\npt\tpatient\n\nhx\thistory\n").unwrap();
        assert_eq!(t.entries().len(), 2);
        assert!(matches!(
            AbbreviationTable::parse_tsv("pt patient"),
            Err(PreprocessError::MalformedTsv { line: 1 })
        ));
        assert!(matches!(
            AbbreviationTable::parse_tsv("pt\ta\nPT\tb"),
            Err(PreprocessError::DuplicateAbbreviation(_))
        ));
    }

    #[test]
    fn builtin_table_loads() {
        let t = AbbreviationTable::builtin();
        assert!(t.entries().len() > 20);
        assert_eq!(AbbreviationTable::parse_tsv(&t.to_tsv()).unwrap(), t);
    }
}
