//! Embeds the same chunks with the three providers: deterministic hashing, a
//! precomputed binary file, and a remote encoder (an in-process mock that
//! speaks the JSON protocol and fails its first call to show the retry).
//!
//! cargo run --example embedding_providers

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use chartcode::embed::{write_embedding_file, ChunkRef, EmbedRequest, EmbedResponse, ProviderConfig};
use chartcode::preprocess::{chunk_and_tokenize, SentenceList, Vocabulary};

const DIM: usize = 4;
const LEN: usize = 8;

async fn encode(State(calls): State<Arc<AtomicUsize>>, Json(req): Json<EmbedRequest>) -> Response {
    if calls.fetch_add(1, Ordering::SeqCst) == 0 {
        return (StatusCode::SERVICE_UNAVAILABLE, "warming up").into_response();
    }
    let embeddings = req
        .chunks
        .iter()
        .map(|ids| ids.iter().map(|&t| (0..DIM).map(|d| (t as f64 + d as f64).sin()).collect()).collect())
        .collect();
    Json(EmbedResponse { dim: DIM, embeddings }).into_response()
}

fn start_mock() -> anyhow::Result<(String, Arc<AtomicUsize>)> {
    let calls = Arc::new(AtomicUsize::new(0));
    let app = Router::new().route("/v1/embed", post(encode)).with_state(calls.clone());
    let listener = std::net::TcpListener::bind("127.0.0.1:0")?;
    listener.set_nonblocking(true)?;
    let url = format!("http://{}", listener.local_addr()?);
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().expect("runtime");
        rt.block_on(async move {
            let l = tokio::net::TcpListener::from_std(listener).expect("listener");
            axum::serve(l, app).await.expect("mock server");
        });
    });
    Ok((url, calls))
}

fn main() -> anyhow::Result<()> {
    let sentences = SentenceList(vec![
        "patient reports chest pain.".into(),
        "troponin elevated on admission.".into(),
        "started on heparin drip.".into(),
    ]);
    let vocab = Vocabulary::build(sentences.iter().map(String::as_str), 1, None);
    let chunks = chunk_and_tokenize(&sentences, &vocab, LEN)?;
    let refs: Vec<ChunkRef<'_>> = chunks.iter().enumerate().map(|(i, c)| ChunkRef::new("note-1", i, c)).collect();
    println!("{} chunks of length {LEN}", chunks.len());

    let hashed = ProviderConfig::hashed(DIM, 7).build()?.embed_batch(&refs)?;
    println!("hashed: first row {:?}", hashed[0].row(0).unwrap_or(&[]));

    let path = std::env::temp_dir().join(format!("chartcode-example-{}.emb", std::process::id()));
    let tensors: Vec<(String, usize, Vec<f32>)> = hashed
        .iter()
        .enumerate()
        .map(|(i, t)| ("note-1".to_string(), i, t.to_dense().iter().map(|&x| x as f32).collect()))
        .collect();
    write_embedding_file(&path, DIM, LEN, &tensors)?;
    let from_file = ProviderConfig::file(DIM, &path).build()?.embed_batch(&refs)?;
    let max_diff = hashed
        .iter()
        .zip(&from_file)
        .flat_map(|(a, b)| a.to_dense().into_iter().zip(b.to_dense()).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    println!("file:   {} tensors read back, max difference from hashed {max_diff:.1e} (f32 storage)", from_file.len());
    std::fs::remove_file(&path)?;

    let (url, calls) = start_mock()?;
    let remote = ProviderConfig { max_retries: 2, ..ProviderConfig::remote(DIM, url) }.build()?;
    let out = remote.embed_batch(&refs)?;
    println!(
        "remote: {} tensors after {} HTTP calls, valid rows {:?}",
        out.len(),
        calls.load(Ordering::SeqCst),
        out.iter().map(|t| t.valid_rows()).collect::<Vec<_>>()
    );
    Ok(())
}
