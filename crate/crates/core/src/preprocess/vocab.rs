use std::collections::HashMap;
use std::path::Path;

use super::PreprocessError;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";

/// Splits text into lowercase word and punctuation tokens.
///
/// Runs of alphanumerics form one token; every other non-whitespace
/// character is a token by itself.
pub fn word_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            word.extend(c.to_lowercase());
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !c.is_whitespace() {
            out.push(c.to_lowercase().collect());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// Word-level vocabulary with `[PAD]` = 0 and `[UNK]` = 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds a vocabulary from texts, keeping tokens seen at least
    /// `min_count` times. Ids are assigned by descending frequency, ties in
    /// lexicographic order.
    pub fn build<'a, I>(texts: I, min_count: usize, max_size: Option<usize>) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut freq: HashMap<String, usize> = HashMap::new();
        for text in texts {
            for tok in word_tokens(text) {
                *freq.entry(tok).or_insert(0) += 1;
            }
        }
        let mut pairs: Vec<(String, usize)> = freq
            .into_iter()
            .filter(|(t, n)| *n >= min_count.max(1) && t != PAD_TOKEN && t != UNK_TOKEN)
            .collect();
        pairs.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let cap = max_size.map_or(usize::MAX, |m| m.saturating_sub(2));
        let tokens = [PAD_TOKEN.to_owned(), UNK_TOKEN.to_owned()]
            .into_iter()
            .chain(pairs.into_iter().take(cap).map(|(t, _)| t))
            .collect();
        Self::from_tokens(tokens).expect("built vocabulary is well formed")
    }

    /// Vocabulary from an id-ordered token list; ids 0 and 1 must be the
    /// pad and unknown tokens.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, PreprocessError> {
        if tokens.first().map(String::as_str) != Some(PAD_TOKEN)
            || tokens.get(1).map(String::as_str) != Some(UNK_TOKEN)
        {
            return Err(PreprocessError::BadVocabulary("ids 0/1 must be [PAD]/[UNK]".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(PreprocessError::BadVocabulary(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        word_tokens(text).iter().map(|t| self.id(t)).collect()
    }

    /// One token per line, line number = id.
    pub fn to_text(&self) -> String {
        self.tokens.iter().map(|t| format!("{t}\n")).collect()
    }

    pub fn parse_text(src: &str) -> Result<Self, PreprocessError> {
        Self::from_tokens(src.lines().map(str::to_owned).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PreprocessError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PreprocessError> {
        Self::parse_text(&std::fs::read_to_string(path)?)
    }
}
