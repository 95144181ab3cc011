//! Synthetic clinical-note corpora with planted label keywords.
//!
//! Every label (ICD-9 code) owns a few reserved pseudo-words. A note carrying
//! a code mentions at least one of that code's keywords; notes without the
//! code mention them only at `noise_rate`. Filler sentences, de-identification
//! placeholders and clinical abbreviations are mixed in so the corpus exercises
//! the whole preprocessing path.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::labels::{select_top_codes, LabelSpace, DEFAULT_CODES_COUNT};
use super::CorpusError;
use crate::preprocess::{word_tokens, AbbreviationTable, RawNote};
use crate::util;

/// Diagnosis codes available to the generator. The first 50 are the default
/// frequent codes and cover all 16 chapter groups; the rest are rarer codes
/// that only contribute chapter-level positives.
pub const CODE_POOL: &[(&str, &str)] = &[
    ("401.9", "Unspecified essential hypertension"),
    ("428.0", "Congestive heart failure, unspecified"),
    ("427.31", "Atrial fibrillation"),
    ("414.01", "Coronary atherosclerosis of native coronary artery"),
    ("584.9", "Acute kidney failure, unspecified"),
    ("250.00", "Diabetes mellitus without mention of complication, type II"),
    ("272.4", "Other and unspecified hyperlipidemia"),
    ("518.81", "Acute respiratory failure"),
    ("599.0", "Urinary tract infection, site not specified"),
    ("530.81", "Esophageal reflux"),
    ("038.9", "Unspecified septicemia"),
    ("V45.81", "Aortocoronary bypass status"),
    ("486", "Pneumonia, organism unspecified"),
    ("285.1", "Acute posthemorrhagic anemia"),
    ("244.9", "Unspecified acquired hypothyroidism"),
    ("496", "Chronic airway obstruction, not elsewhere classified"),
    ("995.92", "Severe sepsis"),
    ("785.52", "Septic shock"),
    ("V58.61", "Long-term (current) use of anticoagulants"),
    ("305.1", "Tobacco use disorder"),
    ("311", "Depressive disorder, not elsewhere classified"),
    ("276.2", "Acidosis"),
    ("162.9", "Malignant neoplasm of bronchus and lung, unspecified"),
    ("507.0", "Pneumonitis due to inhalation of food or vomitus"),
    ("585.9", "Chronic kidney disease, unspecified"),
    ("287.5", "Thrombocytopenia, unspecified"),
    ("410.71", "Subendocardial infarction, initial episode of care"),
    ("571.2", "Alcoholic cirrhosis of liver"),
    ("780.2", "Syncope and collapse"),
    ("008.45", "Intestinal infection due to Clostridium difficile"),
    ("357.2", "Polyneuropathy in diabetes"),
    ("707.03", "Pressure ulcer, lower back"),
    ("715.90", "Osteoarthrosis, unspecified whether generalized or localized"),
    ("765.19", "Other preterm infants, 2,500 grams and over"),
    ("E878.8", "Other specified surgical operations causing abnormal patient reaction"),
    ("V15.82", "Personal history of tobacco use"),
    ("197.7", "Secondary malignant neoplasm of liver"),
    ("303.90", "Other and unspecified alcohol dependence"),
    ("345.90", "Epilepsy, unspecified, without mention of intractable epilepsy"),
    ("578.9", "Hemorrhage of gastrointestinal tract, unspecified"),
    ("682.6", "Cellulitis and abscess of leg, except foot"),
    ("733.00", "Osteoporosis, unspecified"),
    ("770.7", "Chronic respiratory disease arising in the perinatal period"),
    ("799.02", "Hypoxemia"),
    ("997.31", "Ventilator associated pneumonia"),
    ("650", "Normal delivery"),
    ("041.11", "Methicillin susceptible Staphylococcus aureus infection"),
    ("511.9", "Unspecified pleural effusion"),
    ("424.0", "Mitral valve disorders"),
    ("V58.67", "Long-term (current) use of insulin"),
    ("276.1", "Hyposmolality and/or hyponatremia"),
    ("403.90", "Hypertensive chronic kidney disease, unspecified"),
    ("416.8", "Other chronic pulmonary heart diseases"),
    ("427.5", "Cardiac arrest"),
    ("493.90", "Asthma, unspecified"),
    ("272.0", "Pure hypercholesterolemia"),
    ("278.00", "Obesity, unspecified"),
    ("745.5", "Ostium secundum type atrial septal defect"),
    ("E849.7", "Accidents occurring in residential institution"),
    ("V10.3", "Personal history of malignant neoplasm of breast"),
    ("996.72", "Other complications due to other cardiac device, implant, and graft"),
];

const TEMPLATES: &[&str] = &[
    "Pt seen by Dr. [**Last Name (un) 4524**] on [**2101-5-12**].",
    "Admitted from [**Hospital 1121**] with c/o weakness.",
    "Pmh reviewed with family at bedside.",
    "Vitals: HR 88, BP 120/80, afebrile.",
    "Discharged to [**Location 582**] in stable condition.",
    "F/u with PCP Dr. [**First Name4 (NamePattern1) 247**] in 2 weeks.",
    "Pt tolerating po diet, NAD.",
    "Plan discussed w/ pt and family.",
];

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Generator parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_notes: usize,
    /// Distinct generated words, keywords included.
    pub vocab_size: usize,
    pub keywords_per_label: usize,
    /// Positive rate per label; label `i` is `CODE_POOL[i]`.
    pub label_marginals: Vec<f64>,
    pub noise_rate: f64,
    pub seed: u64,
    /// Number of most frequent codes kept as code labels.
    #[serde(default = "default_top_codes")]
    pub top_codes: usize,
    /// Share of notes drawn from `routine_marginals` instead of
    /// `label_marginals`.
    #[serde(default)]
    pub routine_fraction: f64,
    /// Positive rates for routine notes; missing entries are 0.
    #[serde(default)]
    pub routine_marginals: Vec<f64>,
}

fn default_top_codes() -> usize {
    DEFAULT_CODES_COUNT
}

/// Marginals that decay geometrically over the 50 frequent codes, with the
/// remaining pool codes kept rare.
pub fn default_marginals() -> Vec<f64> {
    (0..CODE_POOL.len())
        .map(|i| if i < DEFAULT_CODES_COUNT { 0.12 * 0.97f64.powi(i as i32) } else { 0.008 })
        .collect()
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_notes: 2000,
            vocab_size: 1200,
            keywords_per_label: 3,
            label_marginals: default_marginals(),
            noise_rate: 0.002,
            seed: 7,
            top_codes: DEFAULT_CODES_COUNT,
            routine_fraction: 0.0,
            routine_marginals: Vec::new(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let fail = |m: String| Err(CorpusError::InvalidSynthSpec(m));
        if self.n_notes < 1 {
            return fail("n_notes must be ≥ 1".into());
        }
        if self.label_marginals.is_empty() || self.label_marginals.len() > CODE_POOL.len() {
            return fail(format!("between 1 and {} label marginals required", CODE_POOL.len()));
        }
        if self.label_marginals.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return fail("label marginals must lie in (0, 1)".into());
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return fail("noise_rate must lie in [0, 1)".into());
        }
        if !(0.0..1.0).contains(&self.routine_fraction) {
            return fail("routine_fraction must lie in [0, 1)".into());
        }
        if self.routine_marginals.len() > self.label_marginals.len()
            || self.routine_marginals.iter().any(|&p| !(0.0..1.0).contains(&p))
        {
            return fail("routine marginals must lie in [0, 1), at most one per label".into());
        }
        if self.keywords_per_label < 1 {
            return fail("keywords_per_label must be ≥ 1".into());
        }
        if self.top_codes < 1 {
            return fail("top_codes must be ≥ 1".into());
        }
        let reserved = self.label_marginals.len() * self.keywords_per_label;
        if self.vocab_size < reserved + 20 {
            return fail(format!("vocab_size must be ≥ {}", reserved + 20));
        }
        Ok(())
    }
}

/// Generated notes, their codes and the derived label space.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub notes: Vec<RawNote>,
    /// note id → assigned codes, in pool order.
    pub codes: BTreeMap<String, Vec<String>>,
    pub label_space: LabelSpace,
    /// Keywords owned by each pool label.
    pub keywords: Vec<Vec<String>>,
}

fn pseudo_word(rng: &mut impl Rng) -> String {
    let syllables = rng.gen_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
        w.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
    }
    if rng.gen_bool(0.4) {
        w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
    }
    w
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Generates a corpus. Identical specs give identical corpora.
pub fn synthesize(spec: &SynthSpec) -> Result<SynthCorpus, CorpusError> {
    spec.validate()?;
    let mut rng = util::rng(spec.seed);
    let n_labels = spec.label_marginals.len();

    let mut reserved: HashSet<String> = TEMPLATES.iter().flat_map(|t| word_tokens(t)).collect();
    for (k, _) in AbbreviationTable::builtin().entries() {
        reserved.extend(word_tokens(k));
    }
    let mut fresh = |rng: &mut rand_chacha::ChaCha8Rng| loop {
        let w = pseudo_word(rng);
        if reserved.insert(w.clone()) {
            break w;
        }
    };
    let keywords: Vec<Vec<String>> = (0..n_labels)
        .map(|_| (0..spec.keywords_per_label).map(|_| fresh(&mut rng)).collect())
        .collect();
    let n_fillers = spec.vocab_size - n_labels * spec.keywords_per_label;
    let fillers: Vec<String> = (0..n_fillers).map(|_| fresh(&mut rng)).collect();

    let mut notes = Vec::with_capacity(spec.n_notes);
    let mut codes = BTreeMap::new();
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut subject = 0usize;
    for i in 0..spec.n_notes {
        if i > 0 && rng.gen_bool(0.65) {
            subject += 1;
        }
        let routine = spec.routine_fraction > 0.0 && rng.gen_bool(spec.routine_fraction);
        let positive: Vec<bool> = if routine {
            (0..n_labels).map(|l| rng.gen_bool(spec.routine_marginals.get(l).copied().unwrap_or(0.0))).collect()
        } else {
            spec.label_marginals.iter().map(|&p| rng.gen_bool(p)).collect()
        };

        let n_sent = rng.gen_range(5..=9);
        let mut sentences: Vec<Vec<String>> = (0..n_sent)
            .map(|_| {
                let len = rng.gen_range(5..=9);
                (0..len).map(|_| fillers.choose(&mut rng).unwrap().clone()).collect()
            })
            .collect();
        let plant = |rng: &mut rand_chacha::ChaCha8Rng, word: &str, sentences: &mut Vec<Vec<String>>| {
            let s = rng.gen_range(0..sentences.len());
            let pos = rng.gen_range(1..=sentences[s].len());
            sentences[s].insert(pos, word.to_owned());
        };
        for (label, &on) in positive.iter().enumerate() {
            if on {
                let mentions = if rng.gen_bool(0.5) { 2 } else { 1 };
                for _ in 0..mentions {
                    let kw = keywords[label].choose(&mut rng).unwrap().clone();
                    plant(&mut rng, &kw, &mut sentences);
                }
            } else if spec.noise_rate > 0.0 && rng.gen_bool(spec.noise_rate) {
                let kw = keywords[label].choose(&mut rng).unwrap().clone();
                plant(&mut rng, &kw, &mut sentences);
            }
        }

        let mut rendered: Vec<String> = sentences
            .iter()
            .map(|words| {
                let mut s = capitalize(&words[0]);
                for w in &words[1..] {
                    s.push(' ');
                    s.push_str(w);
                }
                s.push('.');
                s
            })
            .collect();
        if rng.gen_bool(0.6) {
            let t = TEMPLATES.choose(&mut rng).unwrap();
            let at = rng.gen_range(0..=rendered.len());
            rendered.insert(at, (*t).to_owned());
        }
        let mut text = String::new();
        for (j, s) in rendered.iter().enumerate() {
            if j > 0 {
                text.push_str(if rng.gen_bool(0.15) { "\n\n" } else { " " });
            }
            text.push_str(s);
        }

        let note_codes: Vec<String> = positive
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .map(|(l, _)| CODE_POOL[l].0.to_owned())
            .collect();
        for c in &note_codes {
            *counts.entry(c.clone()).or_insert(0) += 1;
        }
        let note_id = format!("N{i:06}");
        codes.insert(note_id.clone(), note_codes);
        notes.push(RawNote {
            note_id,
            subject_id: format!("P{subject:05}"),
            hadm_id: format!("H{i:06}"),
            text,
        });
    }

    let descriptions: HashMap<&str, &str> = CODE_POOL.iter().copied().collect();
    let top: Vec<(String, String)> = select_top_codes(&counts, spec.top_codes)
        .into_iter()
        .map(|c| {
            let d = descriptions[c.as_str()].to_owned();
            (c, d)
        })
        .collect();
    let label_space = LabelSpace::with_default_chapters(&top)?;
    Ok(SynthCorpus { notes, codes, label_space, keywords })
}
