mod common;

use std::path::Path;
use std::process::{Command, Output};

fn chartcode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chartcode")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    for p in [&a, &b] {
        let out = chartcode(&["synth", "--notes", "150", "--seed", "4", "--out", s(p)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(
        std::fs::read(dir.path().join("a.labels.jsonl")).unwrap(),
        std::fs::read(dir.path().join("b.labels.jsonl")).unwrap()
    );
    assert!(dir.path().join("a.label_space.json").exists());
}

#[test]
fn usage_errors_exit_2() {
    let out = chartcode(&["predict", "--text", "Pt stable."]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(chartcode(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(chartcode(&["synth", "--out", "x.jsonl", "--unknown"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1() {
    let out = chartcode(&["predict", "--bundle", "/nonexistent/bundle", "--text", "Pt stable."]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
}

#[test]
fn synth_train_eval_predict_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let cfg = dir.path().join("cfg.json");
    let run = dir.path().join("run");
    std::fs::write(&cfg, serde_json::to_string(&common::tiny_config(0)).unwrap()).unwrap();
    assert!(chartcode(&["synth", "--notes", "250", "--seed", "3", "--out", s(&corpus)]).status.success());

    let out = chartcode(&["preprocess", "--corpus", s(&corpus), "--out", s(&dir.path().join("pre")), "--seed", "3"]);
    assert!(out.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["train"].as_u64().unwrap() + summary["validation"].as_u64().unwrap() + summary["test"].as_u64().unwrap(), 250);

    let out = chartcode(&["train", "--corpus", s(&corpus), "--out", s(&run), "--seed", "3", "--config", s(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trained: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(trained["validation"]["chapter_micro_f1"].is_f64());
    for f in ["config.json", "epochs.jsonl", "metrics.json", "bundle"] {
        assert!(run.join(f).exists(), "{f}");
    }

    let bundle = run.join("bundle");
    let out = chartcode(&["eval", "--bundle", s(&bundle), "--corpus", s(&corpus), "--seed", "3", "--split", "validation"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["chapter_micro_f1"], trained["validation"]["chapter_micro_f1"]);

    let out = chartcode(&["predict", "--bundle", s(&bundle), "--text", "Pt c/o chest pain. Hx of HTN.", "--top-k", "3"]);
    assert!(out.status.success());
    let pred: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(pred["chapters"].as_array().unwrap().len(), 16);
    assert!(pred["codes"].as_array().unwrap().len() <= 3);
    assert_eq!(pred["fingerprint"], trained["fingerprint"]);
}

#[test]
fn augment_preview_permutes_sentences() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    assert!(chartcode(&["synth", "--notes", "5", "--seed", "1", "--out", s(&corpus)]).status.success());
    let out = chartcode(&["augment-preview", "--corpus", s(&corpus), "--note-id", "N000002", "--copies", "2", "--seed", "9"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let blocks: Vec<Vec<&str>> = text.split("== ").skip(1).map(|b| {
        let mut lines: Vec<&str> = b.lines().skip(1).map(|l| l[5..].trim()).collect();
        lines.sort_unstable();
        lines
    }).collect();
    assert_eq!(blocks.len(), 3);
    assert!(blocks.iter().all(|b| b == &blocks[0]));
}
