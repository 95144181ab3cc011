//! Remote provider against an in-process mock encoder with scripted faults.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use chartcode::embed::{ChunkRef, EmbedError, EmbedRequest, EmbedResponse, EmbeddingProvider, ProviderConfig};
use chartcode::preprocess::{chunk_and_tokenize, SentenceList, TokenChunk, Vocabulary};

const DIM: usize = 4;

#[derive(Default)]
struct Calls(AtomicUsize);

async fn embed(Path(mode): Path<String>, State(calls): State<Arc<Calls>>, Json(req): Json<EmbedRequest>) -> Response {
    let n = calls.0.fetch_add(1, Ordering::SeqCst);
    let fail = match mode.as_str() {
        "ok" => None,
        "flaky" if n == 0 => Some(StatusCode::SERVICE_UNAVAILABLE),
        "flaky" => None,
        "reject" => Some(StatusCode::UNPROCESSABLE_ENTITY),
        "down" => Some(StatusCode::INTERNAL_SERVER_ERROR),
        "wrong-dim" => return Json(EmbedResponse { dim: DIM + 1, embeddings: vec![] }).into_response(),
        _ => Some(StatusCode::NOT_FOUND),
    };
    if let Some(status) = fail {
        return (status, "scripted failure").into_response();
    }
    let embeddings = req
        .chunks
        .iter()
        .map(|ids| ids.iter().map(|&t| (0..DIM).map(|d| t as f64 * 0.1 + d as f64).collect()).collect())
        .collect();
    Json(EmbedResponse { dim: DIM, embeddings }).into_response()
}

struct Mock {
    base: String,
    calls: Arc<Calls>,
    _shutdown: tokio::sync::oneshot::Sender<()>,
}

fn mock() -> Mock {
    let calls = Arc::new(Calls::default());
    let app = Router::new().route("/{mode}/v1/embed", post(embed)).with_state(calls.clone());
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let l = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(l, app).with_graceful_shutdown(async { let _ = rx.await; }).await.unwrap();
        });
    });
    Mock { base, calls, _shutdown: tx }
}

fn chunks() -> Vec<TokenChunk> {
    let s = SentenceList(vec!["alpha beta gamma.".into(), "delta alpha.".into(), "beta beta beta beta.".into()]);
    let vocab = Vocabulary::build(s.0.iter().map(String::as_str), 1, None);
    chunk_and_tokenize(&s, &vocab, 6).unwrap()
}

fn provider(m: &Mock, mode: &str, retries: usize) -> Arc<dyn EmbeddingProvider> {
    let cfg = ProviderConfig { max_retries: retries, max_batch: 2, timeout_ms: 2000, ..ProviderConfig::remote(DIM, format!("{}/{mode}", m.base)) };
    cfg.build().unwrap()
}

fn refs(c: &[TokenChunk]) -> Vec<ChunkRef<'_>> {
    c.iter().enumerate().map(|(i, ch)| ChunkRef::new("n1", i, ch)).collect()
}

#[test]
fn success_masks_padding_rows() {
    let m = mock();
    let c = chunks();
    let out = provider(&m, "ok", 0).embed_batch(&refs(&c)).unwrap();
    assert_eq!(out.len(), c.len());
    for (t, ch) in out.iter().zip(&c) {
        assert_eq!(t.valid_rows(), ch.mask.iter().filter(|&&b| b == 1).count());
        assert_eq!(t.get(0, 1), ch.token_ids[0] as f64 * 0.1 + 1.0);
        assert!(t.row(t.valid_rows()).is_none_or(|r| r.iter().all(|&v| v == 0.0)));
    }
    assert_eq!(m.calls.0.load(Ordering::SeqCst), c.len().div_ceil(2));
}

#[test]
fn one_transient_failure_is_retried() {
    let m = mock();
    let c = chunks();
    let reference = provider(&mock(), "ok", 0).embed_batch(&refs(&c[..1])).unwrap();
    let out = provider(&m, "flaky", 2).embed_batch(&refs(&c[..1])).unwrap();
    assert_eq!(out, reference);
    assert_eq!(m.calls.0.load(Ordering::SeqCst), 2);
}

#[test]
fn client_errors_are_not_retried() {
    let m = mock();
    let c = chunks();
    match provider(&m, "reject", 3).embed_batch(&refs(&c)) {
        Err(EmbedError::Rejected { status, .. }) => assert_eq!(status, 422),
        other => panic!("expected rejection, got {other:?}"),
    }
    assert_eq!(m.calls.0.load(Ordering::SeqCst), 1);
}

#[test]
fn exhausted_retries_report_unavailable() {
    let m = mock();
    let c = chunks();
    match provider(&m, "down", 2).embed_batch(&refs(&c)) {
        Err(EmbedError::ProviderUnavailable { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("expected unavailable, got {other:?}"),
    }
    assert_eq!(m.calls.0.load(Ordering::SeqCst), 3);
}

#[test]
fn unreachable_endpoint_reports_unavailable() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let p = ProviderConfig { max_retries: 1, ..ProviderConfig::remote(DIM, format!("http://127.0.0.1:{port}")) }.build().unwrap();
    let c = chunks();
    assert!(matches!(p.embed_batch(&refs(&c)), Err(EmbedError::ProviderUnavailable { attempts: 2, .. })));
}

#[test]
fn shape_mismatch_is_an_error() {
    let m = mock();
    let c = chunks();
    assert!(matches!(provider(&m, "wrong-dim", 0).embed_batch(&refs(&c)), Err(EmbedError::Shape(_))));
}
