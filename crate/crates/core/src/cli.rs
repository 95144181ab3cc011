//! Command-line entry point. [`run`] parses arguments, runs one workflow and
//! returns the process exit code: 0 on success, 1 on a runtime failure and 2
//! on a usage error.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::corpus::{
    augment_shuffle, build_examples, load_labels, prepare_corpus, split_by_patient, synthesize, write_labels, Example,
    LabelSpace, SynthSpec,
};
use crate::model::{predict_note, ModelBundle};
use crate::preprocess::{load_notes, write_notes, AbbreviationTable, Preprocessor, Vocabulary};
use crate::service::{self, ServiceConfig};
use crate::trainer::{
    evaluate, run_ablation, train_pipeline, write_run_dir, AblationPlan, EmbeddedSet, TrainConfig, Variant,
};

#[derive(Debug, Parser)]
#[command(name = "chartcode", version, about = "ICD-9 chapter and code prediction from clinical notes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic labeled corpus.
    Synth(SynthArgs),
    /// Clean, split and chunk a corpus; writes encoded splits and the vocabulary.
    Preprocess(PreprocessArgs),
    /// Train both layers and write a run directory with the model bundle.
    Train(TrainArgs),
    /// Evaluate a bundle on one split of a corpus and print the metrics report.
    Eval(EvalArgs),
    /// Train each data-treatment variant and write the comparison table.
    Ablate(AblateArgs),
    /// Score one note with a bundle and print the prediction as JSON.
    Predict(PredictArgs),
    /// Serve a bundle over HTTP.
    Serve(ServeArgs),
    /// Print a note's sentences next to shuffled copies.
    AugmentPreview(AugmentArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    notes: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Notes JSONL; labels and label space are written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Generator parameters as JSON; `--notes` and `--seed` still apply.
    #[arg(long)]
    spec: Option<PathBuf>,
}

/// Notes JSONL plus its labels and label space, which default to the
/// `<stem>.labels.jsonl` and `<stem>.label_space.json` siblings.
#[derive(Debug, Args)]
struct CorpusArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    label_space: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = crate::preprocess::DEFAULT_CHUNK_LEN)]
    chunk_len: usize,
    #[arg(long, default_value_t = 1)]
    min_token_count: usize,
    /// Tab-separated abbreviation table; the built-in table otherwise.
    #[arg(long)]
    abbreviations: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Run directory to create.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Training config JSON; the single-core preset otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value = "baseline", value_parser = parse_variant)]
    variant: Variant,
    #[arg(long)]
    abbreviations: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitChoice {
    Train,
    Validation,
    Test,
    All,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Split seed; must match the one used for training.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitChoice,
    /// Training config whose split ratios apply.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// CSV table; a JSON copy is written next to it.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Comma-separated variants, in table order.
    #[arg(long, value_delimiter = ',', value_parser = parse_variant,
          default_value = "baseline,+balance,+augment,+balance+augment")]
    variants: Vec<Variant>,
    #[arg(long)]
    abbreviations: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long, conflicts_with = "file", required_unless_present = "file")]
    text: Option<String>,
    /// Read the note text from a file.
    #[arg(long)]
    file: Option<PathBuf>,
    #[arg(long)]
    top_k: Option<usize>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Service config JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long)]
    bind: Option<String>,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Defaults to the first note.
    #[arg(long)]
    note_id: Option<String>,
    #[arg(long, default_value_t = 2)]
    copies: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: crate::trainer::TrainError| e.to_string())
}

/// Parses `argv` (program name first) and runs the selected subcommand.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<()> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Preprocess(a) => preprocess(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
        Command::Predict(a) => predict(a),
        Command::Serve(a) => serve(a),
        Command::AugmentPreview(a) => augment_preview(a),
    }
}

/// `dir/corpus.jsonl` → `dir/corpus<suffix>`.
pub fn sibling(corpus: &Path, suffix: &str) -> PathBuf {
    let stem = corpus.file_stem().map_or_else(|| "corpus".into(), |s| s.to_string_lossy().into_owned());
    corpus.with_file_name(format!("{stem}{suffix}"))
}

struct LoadedCorpus {
    notes: Vec<crate::preprocess::RawNote>,
    labels: Vec<crate::corpus::LabelRecord>,
    space: LabelSpace,
}

impl CorpusArgs {
    fn load(&self) -> anyhow::Result<LoadedCorpus> {
        let labels_path = self.labels.clone().unwrap_or_else(|| sibling(&self.corpus, ".labels.jsonl"));
        let space_path = self.label_space.clone().unwrap_or_else(|| sibling(&self.corpus, ".label_space.json"));
        Ok(LoadedCorpus {
            notes: load_notes(&self.corpus).with_context(|| format!("reading {}", self.corpus.display()))?,
            labels: load_labels(&labels_path).with_context(|| format!("reading {}", labels_path.display()))?,
            space: LabelSpace::load(&space_path).with_context(|| format!("reading {}", space_path.display()))?,
        })
    }
}

fn abbreviations(path: Option<&Path>) -> anyhow::Result<AbbreviationTable> {
    Ok(match path {
        Some(p) => AbbreviationTable::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => AbbreviationTable::builtin(),
    })
}

fn train_config(path: Option<&Path>, seed: u64, epochs: Option<usize>) -> anyhow::Result<TrainConfig> {
    let base = match path {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => TrainConfig::desk(),
    };
    let mut cfg = TrainConfig { seed, ..base };
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn print_json(v: &impl serde::Serialize) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn synth(a: SynthArgs) -> anyhow::Result<()> {
    let base: SynthSpec = match &a.spec {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        None => SynthSpec::default(),
    };
    let corpus = synthesize(&SynthSpec { n_notes: a.notes, seed: a.seed, ..base })?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(&a.out)?);
    write_notes(&mut w, &corpus.notes)?;
    w.flush()?;
    let labels = sibling(&a.out, ".labels.jsonl");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&labels)?);
    write_labels(&mut w, &corpus.label_records())?;
    w.flush()?;
    let space = sibling(&a.out, ".label_space.json");
    corpus.label_space.save(&space)?;
    eprintln!("wrote {} notes to {}, {}, {}", corpus.notes.len(), a.out.display(), labels.display(), space.display());
    Ok(())
}

fn preprocess(a: PreprocessArgs) -> anyhow::Result<()> {
    let c = a.corpus.load()?;
    let prepared = prepare_corpus(
        &c.notes,
        &c.labels,
        &c.space,
        abbreviations(a.abbreviations.as_deref())?,
        a.chunk_len,
        a.min_token_count,
        &Default::default(),
        a.seed,
    )?;
    std::fs::create_dir_all(&a.out)?;
    let s = &prepared.splits;
    write_jsonl(&a.out.join("train.jsonl"), &s.train)?;
    write_jsonl(&a.out.join("validation.jsonl"), &s.validation)?;
    write_jsonl(&a.out.join("test.jsonl"), &s.test)?;
    prepared.preprocessor.vocab.save(a.out.join("vocab.txt"))?;
    std::fs::write(a.out.join("abbreviations.tsv"), prepared.preprocessor.abbreviations.to_tsv())?;
    let chunks: usize = s.train.iter().chain(&s.validation).chain(&s.test).map(|e| e.chunks.len()).sum();
    print_json(&serde_json::json!({
        "train": s.train.len(),
        "validation": s.validation.len(),
        "test": s.test.len(),
        "skipped": prepared.skipped,
        "vocab_size": prepared.preprocessor.vocab.len(),
        "chunks": chunks,
    }))
}

fn train(a: TrainArgs) -> anyhow::Result<()> {
    let cfg = train_config(a.config.as_deref(), a.seed, a.epochs)?;
    let c = a.corpus.load()?;
    let prepared = prepare_corpus(
        &c.notes,
        &c.labels,
        &c.space,
        abbreviations(a.abbreviations.as_deref())?,
        cfg.arch.chunk_len,
        cfg.min_token_count,
        &cfg.split,
        cfg.seed,
    )?;
    let out = train_pipeline(&prepared.splits, &c.space, &prepared.preprocessor, &cfg, a.variant)?;
    let files = write_run_dir(&a.out, &cfg, &out)?;
    eprintln!("bundle written to {}", files.bundle.display());
    print_json(&serde_json::json!({
        "variant": a.variant,
        "fingerprint": out.bundle.fingerprint,
        "train_examples": out.train_examples,
        "validation": { "chapter_micro_f1": out.validation.chapter_micro_f1, "code_micro_f1": out.validation.code_micro_f1 },
        "test": out.test.as_ref().map(|t| serde_json::json!({
            "chapter_micro_f1": t.chapter_micro_f1, "code_micro_f1": t.code_micro_f1
        })),
        "bundle": files.bundle,
    }))
}

fn eval(a: EvalArgs) -> anyhow::Result<()> {
    let bundle = ModelBundle::load(&a.bundle).with_context(|| format!("loading bundle {}", a.bundle.display()))?;
    let c = a.corpus.load()?;
    bundle.ensure_compatible(&c.space)?;
    let ratios = match &a.config {
        Some(p) => train_config(Some(p), a.seed, None)?.split,
        None => Default::default(),
    };
    let (examples, _) = build_examples(&c.notes, &c.labels, &c.space, &bundle.preprocessor)?;
    let examples: Vec<Example> = match a.split {
        SplitChoice::All => examples,
        choice => {
            let s = split_by_patient(examples, &ratios, a.seed)?;
            match choice {
                SplitChoice::Train => s.train,
                SplitChoice::Validation => s.validation,
                _ => s.test,
            }
        }
    };
    if examples.is_empty() {
        bail!("selected split is empty");
    }
    let provider = bundle.embedding.build()?;
    let set = EmbeddedSet::new(examples, provider.as_ref())?;
    print_json(&evaluate(&bundle, &set)?)
}

fn ablate(a: AblateArgs) -> anyhow::Result<()> {
    let cfg = train_config(a.config.as_deref(), a.seed, a.epochs)?;
    let plan = AblationPlan::new(a.variants)?;
    let c = a.corpus.load()?;
    let prepared = prepare_corpus(
        &c.notes,
        &c.labels,
        &c.space,
        abbreviations(a.abbreviations.as_deref())?,
        cfg.arch.chunk_len,
        cfg.min_token_count,
        &cfg.split,
        cfg.seed,
    )?;
    let table = run_ablation(&plan, &prepared.splits, &c.space, &prepared.preprocessor, &cfg);
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let csv = table.to_csv();
    std::fs::write(&a.out, &csv)?;
    std::fs::write(a.out.with_extension("json"), serde_json::to_string_pretty(&table)?)?;
    print!("{csv}");
    if let Some(r) = table.rows.iter().find(|r| r.error.is_some()) {
        bail!("variant {} failed: {}", r.variant, r.error.as_deref().unwrap_or_default());
    }
    Ok(())
}

fn predict(a: PredictArgs) -> anyhow::Result<()> {
    let text = match (&a.text, &a.file) {
        (Some(t), _) => t.clone(),
        (None, Some(p)) => std::fs::read_to_string(p)?,
        (None, None) => unreachable!("clap requires --text or --file"),
    };
    let bundle = ModelBundle::load(&a.bundle).with_context(|| format!("loading bundle {}", a.bundle.display()))?;
    let provider = bundle.embedding.build()?;
    let mut result = predict_note(&text, &bundle, provider.as_ref())?;
    result.sort_codes_by_score();
    if let Some(k) = a.top_k {
        result.codes.truncate(k);
    }
    print_json(&result)
}

fn serve(a: ServeArgs) -> anyhow::Result<()> {
    let mut cfg = ServiceConfig::load(a.config.as_deref())?;
    if let Some(b) = a.bundle {
        cfg.bundle_path = Some(b);
    }
    if let Some(b) = a.bind {
        cfg.bind_addr = b;
    }
    service::serve(&cfg)?;
    Ok(())
}

fn augment_preview(a: AugmentArgs) -> anyhow::Result<()> {
    let notes = load_notes(&a.corpus)?;
    let note = match &a.note_id {
        Some(id) => notes.iter().find(|n| &n.note_id == id).with_context(|| format!("no note {id:?}"))?,
        None => notes.first().context("corpus is empty")?,
    };
    let table = AbbreviationTable::builtin();
    let sentences = crate::preprocess::clean_and_split(&note.text, &table);
    let vocab = Vocabulary::build(sentences.0.iter().map(String::as_str), 1, None);
    let pre = Preprocessor::new(table, vocab, crate::preprocess::DEFAULT_CHUNK_LEN)?;
    let example = Example {
        note_id: note.note_id.clone(),
        subject_id: note.subject_id.clone(),
        chunks: pre.chunk(&sentences),
        sentences: sentences.clone(),
        chapter_labels: Vec::new(),
        code_labels: Vec::new(),
    };
    let copies = augment_shuffle(&example, &sentences, a.copies, a.seed, &pre.vocab, pre.chunk_len);
    let mut out = std::io::stdout().lock();
    writeln!(out, "== {} (original)", note.note_id)?;
    for (i, s) in sentences.0.iter().enumerate() {
        writeln!(out, "{:>3}  {s}", i + 1)?;
    }
    for c in &copies {
        writeln!(out, "== {}", c.note_id)?;
        for s in &c.sentences.0 {
            let orig = sentences.0.iter().position(|o| o == s).map_or(0, |p| p + 1);
            writeln!(out, "{orig:>3}  {s}")?;
        }
    }
    Ok(())
}
