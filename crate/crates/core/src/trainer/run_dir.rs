use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{TrainConfig, TrainError, TrainOutcome};

/// Paths written by [`write_run_dir`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunFiles {
    pub config: PathBuf,
    pub epochs: PathBuf,
    pub metrics: PathBuf,
    pub bundle: PathBuf,
}

#[derive(Serialize)]
struct EpochLine<'a> {
    model: &'a str,
    #[serde(flatten)]
    record: &'a super::EpochRecord,
}

/// Writes the config snapshot, per-epoch JSONL, metrics JSON and the bundle.
pub fn write_run_dir(dir: impl AsRef<Path>, cfg: &TrainConfig, out: &TrainOutcome) -> Result<RunFiles, TrainError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let files = RunFiles {
        config: dir.join("config.json"),
        epochs: dir.join("epochs.jsonl"),
        metrics: dir.join("metrics.json"),
        bundle: dir.join("bundle"),
    };
    std::fs::write(&files.config, serde_json::to_string_pretty(cfg).expect("config serializes"))?;

    let mut w = std::io::BufWriter::new(std::fs::File::create(&files.epochs)?);
    let mut line = |model: &str, r: &super::EpochRecord| -> std::io::Result<()> {
        serde_json::to_writer(&mut w, &EpochLine { model, record: r })?;
        w.write_all(b"\n")
    };
    for r in &out.history.chapter {
        line("chapter", r)?;
    }
    for (c, h) in out.history.codes.iter().enumerate() {
        for r in h.iter().flatten() {
            line(&format!("codes[{c}]"), r)?;
        }
    }
    w.flush()?;
    drop(w);

    let metrics = serde_json::json!({
        "train_examples": out.train_examples,
        "validation": out.validation,
        "test": out.test,
    });
    std::fs::write(&files.metrics, serde_json::to_string_pretty(&metrics).expect("metrics serialize"))?;
    out.bundle.save(&files.bundle)?;
    Ok(files)
}

