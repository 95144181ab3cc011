//! Starts the HTTP service in-process on a free port with a freshly trained
//! bundle and calls each endpoint.
//!
//! cargo run --release --example serve_api

use std::sync::Arc;
use std::time::Duration;

use chartcode::corpus::{prepare_corpus, synthesize, SynthSpec};
use chartcode::preprocess::AbbreviationTable;
use chartcode::service::{AppState, ServerHandle};
use chartcode::trainer::{train_pipeline, TrainConfig, Variant};

fn main() -> anyhow::Result<()> {
    let corpus = synthesize(&SynthSpec { n_notes: 400, seed: 5, ..SynthSpec::default() })?;
    let mut cfg = TrainConfig { seed: 5, epochs: 4, patience: 4, ..TrainConfig::desk() };
    cfg.arch.filters_per_width = 32;
    let prepared = prepare_corpus(
        &corpus.notes,
        &corpus.label_records(),
        &corpus.label_space,
        AbbreviationTable::builtin(),
        cfg.arch.chunk_len,
        cfg.min_token_count,
        &cfg.split,
        cfg.seed,
    )?;
    let bundle = train_pipeline(&prepared.splits, &corpus.label_space, &prepared.preprocessor, &cfg, Variant::Baseline)?.bundle;
    let provider = bundle.embedding.build()?;
    let state = Arc::new(AppState::new(Some((Arc::new(bundle), provider)), Duration::from_secs(30)));
    let server = ServerHandle::start(state, "127.0.0.1:0", 1 << 20)?;
    println!("listening on {}", server.url());

    let client = reqwest::blocking::Client::new();
    let health = client.get(format!("{}/healthz", server.url())).send()?;
    println!("GET /healthz -> {} {}", health.status(), health.text()?);

    let info = client.get(format!("{}/v1/model", server.url())).send()?;
    let info: serde_json::Value = serde_json::from_str(&info.text()?)?;
    println!("GET /v1/model -> {} chapters, {} codes, fingerprint {}", info["n_chapters"], info["n_codes"], info["fingerprint"]);

    let body = serde_json::json!({ "text": corpus.notes[0].text, "top_k_codes": 3 });
    let resp = client
        .post(format!("{}/v1/predict", server.url()))
        .header("content-type", "application/json")
        .body(body.to_string())
        .send()?;
    let status = resp.status();
    let v: serde_json::Value = serde_json::from_str(&resp.text()?)?;
    println!("POST /v1/predict -> {status}, {:.1} ms", v["latency_ms"].as_f64().unwrap_or(0.0));
    for c in v["codes"].as_array().into_iter().flatten() {
        println!("  {} {:.3} decided={}", c["code"].as_str().unwrap_or(""), c["score"].as_f64().unwrap_or(0.0), c["decided"]);
    }

    let bad = client.post(format!("{}/v1/predict", server.url())).body("{}").send()?;
    println!("POST /v1/predict with {{}} -> {} {}", bad.status(), bad.text()?);
    Ok(())
}
