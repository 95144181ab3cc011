use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{train_pipeline, AblationPlan, TrainConfig, Variant};
use crate::corpus::{LabelSpace, Splits};
use crate::preprocess::Preprocessor;
use crate::util::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub chapter_micro_f1: Option<f64>,
    pub code_micro_f1: Option<f64>,
    pub chapter_macro_f1: Option<f64>,
    pub code_macro_f1: Option<f64>,
    pub train_examples: usize,
    /// Hash of the sorted validation note ids; equal across variants.
    pub validation_ids_sha256: String,
    pub error: Option<String>,
}

/// Change between consecutive plan entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationDelta {
    pub from: Variant,
    pub to: Variant,
    pub chapter_delta: Option<f64>,
    pub code_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub seed: u64,
    pub rows: Vec<AblationRow>,
    pub deltas: Vec<AblationDelta>,
}

impl AblationTable {
    pub fn row(&self, v: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v)
    }

    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        let mut out = String::from("variant,chapter_micro_f1,code_micro_f1,chapter_macro_f1,code_macro_f1,train_examples,error\n");
        for r in &self.rows {
            let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.variant,
                fmt(r.chapter_micro_f1),
                fmt(r.code_micro_f1),
                fmt(r.chapter_macro_f1),
                fmt(r.code_macro_f1),
                r.train_examples,
                err
            );
        }
        out
    }
}

/// Trains every variant with the same seed and budget. A failing variant is
/// recorded with its error and the others still run.
pub fn run_ablation(
    plan: &AblationPlan,
    splits: &Splits,
    space: &LabelSpace,
    pre: &Preprocessor,
    cfg: &TrainConfig,
) -> AblationTable {
    let mut ids: Vec<&str> = splits.validation.iter().map(|e| e.note_id.as_str()).collect();
    ids.sort_unstable();
    let val_sha = sha256_hex(ids.join("\n").as_bytes());
    let rows: Vec<AblationRow> = plan
        .variants
        .iter()
        .map(|&variant| match train_pipeline(splits, space, pre, cfg, variant) {
            Ok(out) => {
                log::info!(
                    "{variant}: chapter {:.4} code {:.4}",
                    out.validation.chapter_micro_f1,
                    out.validation.code_micro_f1
                );
                AblationRow {
                    variant,
                    chapter_micro_f1: Some(out.validation.chapter_micro_f1),
                    code_micro_f1: Some(out.validation.code_micro_f1),
                    chapter_macro_f1: out.validation.chapters.macro_avg.map(|p| p.f1),
                    code_macro_f1: out.validation.codes.macro_avg.map(|p| p.f1),
                    train_examples: out.train_examples,
                    validation_ids_sha256: val_sha.clone(),
                    error: None,
                }
            }
            Err(e) => {
                log::error!("{variant} failed: {e}");
                AblationRow {
                    variant,
                    chapter_micro_f1: None,
                    code_micro_f1: None,
                    chapter_macro_f1: None,
                    code_macro_f1: None,
                    train_examples: 0,
                    validation_ids_sha256: val_sha.clone(),
                    error: Some(e.to_string()),
                }
            }
        })
        .collect();
    let diff = |a: Option<f64>, b: Option<f64>| a.zip(b).map(|(a, b)| b - a);
    let deltas = rows
        .windows(2)
        .map(|w| AblationDelta {
            from: w[0].variant,
            to: w[1].variant,
            chapter_delta: diff(w[0].chapter_micro_f1, w[1].chapter_micro_f1),
            code_delta: diff(w[0].code_micro_f1, w[1].code_micro_f1),
        })
        .collect();
    AblationTable { seed: cfg.seed, rows, deltas }
}
