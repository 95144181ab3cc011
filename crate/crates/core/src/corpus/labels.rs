//! ICD-9 code parsing, chapter ranges and the two-layer label space.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::util::sha256_hex;

const DEFAULT_CHAPTERS: &str = include_str!("../../assets/icd9_chapters.json");

/// Number of chapter labels in the default space.
pub const DEFAULT_CHAPTERS_COUNT: usize = 16;
/// Number of code labels in the default space.
pub const DEFAULT_CODES_COUNT: usize = 50;

/// Code family: plain numeric, external-cause `E` or supplementary `V`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CodeFamily {
    Numeric,
    E,
    V,
}

/// A syntactically valid ICD-9 diagnosis code.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Icd9Code {
    pub family: CodeFamily,
    /// Numeric root: 3 digits (numeric, E) or 2 digits (V).
    pub root: u32,
    pub subdivision: Option<String>,
}

impl FromStr for Icd9Code {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CorpusError::MalformedCode(s.to_owned());
        let (family, body) = match s.as_bytes().first() {
            Some(b'E') => (CodeFamily::E, &s[1..]),
            Some(b'V') => (CodeFamily::V, &s[1..]),
            Some(_) => (CodeFamily::Numeric, s),
            None => return Err(bad()),
        };
        let (root, sub) = match body.split_once('.') {
            Some((r, sub)) => (r, Some(sub)),
            None => (body, None),
        };
        let root_len = if family == CodeFamily::V { 2 } else { 3 };
        if root.len() != root_len || !root.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        if let Some(sub) = sub {
            if !(1..=2).contains(&sub.len()) || !sub.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
        }
        Ok(Self {
            family,
            root: root.parse().map_err(|_| bad())?,
            subdivision: sub.map(str::to_owned),
        })
    }
}

impl fmt::Display for Icd9Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            CodeFamily::Numeric => write!(f, "{:03}", self.root)?,
            CodeFamily::E => write!(f, "E{:03}", self.root)?,
            CodeFamily::V => write!(f, "V{:02}", self.root)?,
        }
        if let Some(sub) = &self.subdivision {
            write!(f, ".{sub}")?;
        }
        Ok(())
    }
}

/// Inclusive range of code roots within one family, e.g. `390-459`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeRange {
    pub family: CodeFamily,
    pub lo: u32,
    pub hi: u32,
}

impl CodeRange {
    pub fn contains(&self, code: &Icd9Code) -> bool {
        code.family == self.family && (self.lo..=self.hi).contains(&code.root)
    }
}

impl FromStr for CodeRange {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CorpusError::MalformedRange(s.to_owned());
        let (a, b) = s.split_once('-').ok_or_else(bad)?;
        let a: Icd9Code = a.trim().parse().map_err(|_| bad())?;
        let b: Icd9Code = b.trim().parse().map_err(|_| bad())?;
        if a.family != b.family || a.root > b.root || a.subdivision.is_some() || b.subdivision.is_some() {
            return Err(bad());
        }
        Ok(Self { family: a.family, lo: a.root, hi: b.root })
    }
}

impl fmt::Display for CodeRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lo = Icd9Code { family: self.family, root: self.lo, subdivision: None };
        let hi = Icd9Code { family: self.family, root: self.hi, subdivision: None };
        write!(f, "{lo}-{hi}")
    }
}

impl Serialize for CodeRange {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CodeRange {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chapter {
    pub id: usize,
    pub name: String,
    pub ranges: Vec<CodeRange>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeLabel {
    pub code: String,
    #[serde(default)]
    pub description: String,
    pub chapter_id: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct LabelSpaceAsset {
    chapters: Vec<Chapter>,
    #[serde(default)]
    codes: Vec<AssetCode>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AssetCode {
    code: String,
    #[serde(default)]
    description: String,
}

/// Chapter labels (layer 1), code labels (layer 2) and the code → chapter map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    chapters: Vec<Chapter>,
    codes: Vec<CodeLabel>,
}

impl LabelSpace {
    /// Builds a space from chapter ranges and an ordered code list; each code
    /// is assigned to the chapter whose ranges contain its root.
    pub fn new(chapters: Vec<Chapter>, codes: &[(String, String)]) -> Result<Self, CorpusError> {
        if chapters.is_empty() {
            return Err(CorpusError::InvalidLabelSpace("no chapters".into()));
        }
        for (i, c) in chapters.iter().enumerate() {
            if c.id != i {
                return Err(CorpusError::InvalidLabelSpace(format!(
                    "chapter ids must be 0..n in order, found {} at position {i}",
                    c.id
                )));
            }
        }
        let mut space = Self { chapters, codes: Vec::with_capacity(codes.len()) };
        let mut seen = std::collections::HashSet::new();
        for (code, description) in codes {
            if !seen.insert(code.clone()) {
                return Err(CorpusError::InvalidLabelSpace(format!("duplicate code {code}")));
            }
            let chapter_id = space.chapter_of(code)?;
            space.codes.push(CodeLabel {
                code: code.clone(),
                description: description.clone(),
                chapter_id,
            });
        }
        Ok(space)
    }

    /// The 16 bundled ICD-9 chapter groups with no code labels.
    pub fn default_chapters() -> Vec<Chapter> {
        let asset: LabelSpaceAsset =
            serde_json::from_str(DEFAULT_CHAPTERS).expect("bundled chapter table is valid");
        asset.chapters
    }

    /// Default chapters with the given ordered codes.
    pub fn with_default_chapters(codes: &[(String, String)]) -> Result<Self, CorpusError> {
        Self::new(Self::default_chapters(), codes)
    }

    /// Parses the label-space asset: chapters with ranges and an optional
    /// fixed code list.
    pub fn from_json(src: &str) -> Result<Self, CorpusError> {
        let asset: LabelSpaceAsset = serde_json::from_str(src)
            .map_err(|e| CorpusError::InvalidLabelSpace(e.to_string()))?;
        let codes: Vec<(String, String)> =
            asset.codes.into_iter().map(|c| (c.code, c.description)).collect();
        Self::new(asset.chapters, &codes)
    }

    pub fn to_json(&self) -> String {
        let asset = LabelSpaceAsset {
            chapters: self.chapters.clone(),
            codes: self
                .codes
                .iter()
                .map(|c| AssetCode { code: c.code.clone(), description: c.description.clone() })
                .collect(),
        };
        serde_json::to_string_pretty(&asset).expect("label space serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn chapters(&self) -> &[Chapter] {
        &self.chapters
    }

    pub fn codes(&self) -> &[CodeLabel] {
        &self.codes
    }

    pub fn n_chapters(&self) -> usize {
        self.chapters.len()
    }

    pub fn n_codes(&self) -> usize {
        self.codes.len()
    }

    /// Chapter plus code label count.
    pub fn n_labels(&self) -> usize {
        self.n_chapters() + self.n_codes()
    }

    pub fn code_index(&self, code: &str) -> Option<usize> {
        self.codes.iter().position(|c| c.code == code)
    }

    /// Global code indices grouped by chapter, each group in code order.
    pub fn codes_by_chapter(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.n_chapters()];
        for (i, c) in self.codes.iter().enumerate() {
            groups[c.chapter_id].push(i);
        }
        groups
    }

    pub fn code_to_chapter(&self) -> BTreeMap<&str, usize> {
        self.codes.iter().map(|c| (c.code.as_str(), c.chapter_id)).collect()
    }

    /// Chapter whose ranges contain the code's root.
    pub fn chapter_of(&self, code: &str) -> Result<usize, CorpusError> {
        let parsed: Icd9Code = code.parse()?;
        self.chapters
            .iter()
            .find(|ch| ch.ranges.iter().any(|r| r.contains(&parsed)))
            .map(|ch| ch.id)
            .ok_or_else(|| CorpusError::UnmappedCode(code.to_owned()))
    }

    /// Multi-hot chapter and code vectors for a note's assigned codes. Codes
    /// outside the code list still switch on their chapter.
    pub fn encode(&self, codes: &[String]) -> Result<(Vec<bool>, Vec<bool>), CorpusError> {
        let mut chapters = vec![false; self.n_chapters()];
        let mut code_vec = vec![false; self.n_codes()];
        for code in codes {
            chapters[self.chapter_of(code)?] = true;
            if let Some(i) = self.code_index(code) {
                code_vec[i] = true;
            }
        }
        Ok((chapters, code_vec))
    }

    /// Stable content hash identifying this label space.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("label space serializes");
        sha256_hex(&canonical)[..16].to_owned()
    }
}

/// Free-function form of [`LabelSpace::chapter_of`].
pub fn map_code_to_chapter(code: &str, space: &LabelSpace) -> Result<usize, CorpusError> {
    space.chapter_of(code)
}

/// The `k` most frequent codes, count descending, ties by code string.
pub fn select_top_codes(code_counts: &HashMap<String, usize>, k: usize) -> Vec<String> {
    let mut pairs: Vec<(&String, &usize)> = code_counts.iter().collect();
    pairs.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    pairs.into_iter().take(k).map(|(c, _)| c.clone()).collect()
}
