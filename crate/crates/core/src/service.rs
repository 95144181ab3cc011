//! HTTP prediction service over one immutable [`ModelBundle`].
//!
//! Endpoints: `POST /v1/predict`, `GET /v1/model`, `GET /healthz`.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{EmbedError, EmbeddingProvider, ProviderConfig, ProviderKind};
use crate::model::{predict_note, ModelBundle, ModelError, PredictionResult};
use crate::util;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid service config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}
fn default_body_cap() -> usize {
    1 << 20
}
fn default_timeout() -> u64 {
    30_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind_addr: String,
    #[serde(default)]
    pub bundle_path: Option<PathBuf>,
    /// Overrides the provider recorded in the bundle.
    #[serde(default)]
    pub embedding: Option<ProviderConfig>,
    #[serde(default = "default_body_cap")]
    pub max_body_bytes: usize,
    #[serde(default = "default_timeout")]
    pub request_timeout_ms: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind_addr: default_bind(),
            bundle_path: None,
            embedding: None,
            max_body_bytes: default_body_cap(),
            request_timeout_ms: default_timeout(),
        }
    }
}

impl ServiceConfig {
    /// Reads a JSON config file (or starts from defaults) and applies
    /// `BIND_ADDR`, `BUNDLE_PATH` and `EMBED_ENDPOINT` from the environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ServiceError> {
        let mut cfg = match path {
            Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)
                .map_err(|e| ServiceError::Config(format!("{}: {e}", p.display())))?,
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(v) = get("BIND_ADDR") {
            self.bind_addr = v;
        }
        if let Some(v) = get("BUNDLE_PATH") {
            self.bundle_path = Some(v.into());
        }
        if let Some(v) = get("EMBED_ENDPOINT") {
            let mut p = self.embedding.clone().unwrap_or_else(|| ProviderConfig::remote(1, ""));
            p.kind = ProviderKind::Remote;
            p.endpoint = Some(v);
            self.embedding = Some(p);
        }
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        self.bind_addr
            .parse::<SocketAddr>()
            .map_err(|e| ServiceError::Config(format!("bind_addr {:?}: {e}", self.bind_addr)))?;
        if self.max_body_bytes < 1024 {
            return Err(ServiceError::Config("max_body_bytes must be ≥ 1024".into()));
        }
        if self.request_timeout_ms == 0 {
            return Err(ServiceError::Config("request_timeout_ms must be > 0".into()));
        }
        Ok(())
    }
}

/// Shared, read-only request context.
pub struct AppState {
    loaded: Option<(Arc<ModelBundle>, Arc<dyn EmbeddingProvider>)>,
    timeout: Duration,
    errors: AtomicU64,
}

impl AppState {
    /// Loads the bundle named by the config, if any, and builds its provider.
    /// A provider override keeps the bundle's embedding width.
    pub fn from_config(cfg: &ServiceConfig) -> Result<Self, ServiceError> {
        let loaded = match &cfg.bundle_path {
            Some(p) => {
                let bundle = ModelBundle::load(p)?;
                let provider = match &cfg.embedding {
                    Some(e) => ProviderConfig { dim: bundle.embedding.dim, ..e.clone() }.build()?,
                    None => bundle.embedding.build()?,
                };
                Some((Arc::new(bundle), provider))
            }
            None => None,
        };
        Ok(Self::new(loaded, Duration::from_millis(cfg.request_timeout_ms)))
    }

    pub fn new(loaded: Option<(Arc<ModelBundle>, Arc<dyn EmbeddingProvider>)>, timeout: Duration) -> Self {
        Self { loaded, timeout, errors: AtomicU64::new(0) }
    }

    pub fn bundle(&self) -> Option<&ModelBundle> {
        self.loaded.as_ref().map(|(b, _)| b.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub text: String,
    #[serde(default)]
    pub top_k_codes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    #[serde(flatten)]
    pub result: PredictionResult,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub fingerprint: String,
    pub n_chapters: usize,
    pub n_codes: usize,
    pub n_labels: usize,
    pub chapters: Vec<String>,
    pub codes: Vec<String>,
    pub thresholds: Vec<f64>,
    pub chapter_gate: f64,
    pub provider: ProviderKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub bundle_loaded: bool,
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: msg.into(), id: None })).into_response()
}

fn internal(state: &AppState, detail: &dyn std::fmt::Display) -> Response {
    let n = state.errors.fetch_add(1, Ordering::Relaxed);
    let nanos = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_nanos() as u64);
    let id = format!("{:016x}", util::mix(&[nanos, n]));
    log::error!("request {id} failed: {detail}");
    (StatusCode::INTERNAL_SERVER_ERROR, Json(ErrorBody { error: "internal error".into(), id: Some(id) }))
        .into_response()
}

fn unavailable(e: &EmbedError) -> bool {
    match e {
        EmbedError::ProviderUnavailable { .. } => true,
        EmbedError::AtIndex { source, .. } => unavailable(source),
        _ => false,
    }
}

async fn predict(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let start = Instant::now();
    let req: PredictRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed request: {e}")),
    };
    if req.text.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "text is empty");
    }
    let Some((bundle, provider)) = state.loaded.clone() else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "no model bundle loaded");
    };
    let text = req.text;
    let job = tokio::task::spawn_blocking(move || predict_note(&text, &bundle, provider.as_ref()));
    let outcome = match tokio::time::timeout(state.timeout, job).await {
        Err(_) => return error(StatusCode::SERVICE_UNAVAILABLE, "prediction timed out"),
        Ok(Err(join)) => return internal(&state, &join),
        Ok(Ok(r)) => r,
    };
    match outcome {
        Ok(mut result) => {
            result.sort_codes_by_score();
            if let Some(k) = req.top_k_codes {
                result.codes.truncate(k);
            }
            let latency_ms = start.elapsed().as_secs_f64() * 1e3;
            Json(PredictResponse { result, latency_ms }).into_response()
        }
        Err(ModelError::EmptyNote) => error(StatusCode::BAD_REQUEST, "text has no content after cleaning"),
        Err(ModelError::Embed(e)) if unavailable(&e) => error(StatusCode::SERVICE_UNAVAILABLE, e.to_string()),
        Err(e) => internal(&state, &e),
    }
}

async fn model_info(State(state): State<Arc<AppState>>) -> Response {
    let Some((b, p)) = &state.loaded else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "no model bundle loaded");
    };
    let space = &b.label_space;
    Json(ModelInfo {
        fingerprint: b.fingerprint.clone(),
        n_chapters: space.n_chapters(),
        n_codes: space.n_codes(),
        n_labels: space.n_labels(),
        chapters: space.chapters().iter().map(|c| c.name.clone()).collect(),
        codes: space.codes().iter().map(|c| c.code.clone()).collect(),
        thresholds: b.thresholds.clone(),
        chapter_gate: b.chapter_gate,
        provider: p.kind(),
    })
    .into_response()
}

async fn healthz(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(Health { status: "ok".into(), bundle_loaded: state.loaded.is_some() })
}

pub fn router(state: Arc<AppState>, max_body_bytes: usize) -> Router {
    Router::new()
        .route("/v1/predict", post(predict))
        .route("/v1/model", get(model_info))
        .route("/healthz", get(healthz))
        .layer(DefaultBodyLimit::max(max_body_bytes))
        .with_state(state)
}

/// Serves until ctrl-c.
pub fn serve(cfg: &ServiceConfig) -> Result<(), ServiceError> {
    cfg.validate()?;
    let state = Arc::new(AppState::from_config(cfg)?);
    let app = router(state.clone(), cfg.max_body_bytes);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&cfg.bind_addr).await?;
        log::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })?;
    drop(rt);
    // the blocking HTTP client inside a remote provider must be dropped
    // outside the async runtime
    drop(state);
    Ok(())
}

/// A server running on its own thread; stops when dropped.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
    _state: Arc<AppState>,
}

impl ServerHandle {
    /// Binds `addr` (port 0 picks a free port) and starts serving.
    pub fn start(state: Arc<AppState>, addr: &str, max_body_bytes: usize) -> Result<Self, ServiceError> {
        let std_listener = std::net::TcpListener::bind(addr)?;
        std_listener.set_nonblocking(true)?;
        let local = std_listener.local_addr()?;
        let app = router(state.clone(), max_body_bytes);
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
        let thread = std::thread::spawn(move || {
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener).expect("listener registers with runtime");
                let _ = axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        });
        Ok(Self { addr: local, shutdown: Some(tx), thread: Some(thread), _state: state })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_overrides_apply() {
        let mut cfg = ServiceConfig::default();
        cfg.apply_env(|k| match k {
            "BIND_ADDR" => Some("0.0.0.0:9000".into()),
            "BUNDLE_PATH" => Some("/models/x".into()),
            "EMBED_ENDPOINT" => Some("http://encoder:8000".into()),
            _ => None,
        });
        assert_eq!(cfg.bind_addr, "0.0.0.0:9000");
        assert_eq!(cfg.bundle_path.as_deref(), Some(Path::new("/models/x")));
        let e = cfg.embedding.unwrap();
        assert_eq!(e.kind, ProviderKind::Remote);
        assert_eq!(e.endpoint.as_deref(), Some("http://encoder:8000"));
    }

    #[test]
    fn config_validation() {
        assert!(ServiceConfig { bind_addr: "nope".into(), ..Default::default() }.validate().is_err());
        assert!(ServiceConfig { max_body_bytes: 100, ..Default::default() }.validate().is_err());
        assert!(serde_json::from_str::<ServiceConfig>(r#"{"bogus": 1}"#).is_err());
        let c: ServiceConfig = serde_json::from_str(r#"{"bind_addr": "127.0.0.1:1234"}"#).unwrap();
        c.validate().unwrap();
        assert_eq!(c.max_body_bytes, 1 << 20);
    }

    #[test]
    fn health_and_missing_bundle() {
        let state = Arc::new(AppState::new(None, Duration::from_secs(5)));
        let server = ServerHandle::start(state, "127.0.0.1:0", 4096).unwrap();
        let client = reqwest::blocking::Client::new();
        let body = client.get(format!("{}/healthz", server.url())).send().unwrap().text().unwrap();
        let h: Health = serde_json::from_str(&body).unwrap();
        assert_eq!(h, Health { status: "ok".into(), bundle_loaded: false });
        let r = client.get(format!("{}/v1/model", server.url())).send().unwrap();
        assert_eq!(r.status().as_u16(), 503);
        let r = client.post(format!("{}/v1/predict", server.url())).body("{}").send().unwrap();
        assert_eq!(r.status().as_u16(), 400);
        let r = client.post(format!("{}/v1/predict", server.url())).body(r#"{"text":"Pt stable."}"#).send().unwrap();
        assert_eq!(r.status().as_u16(), 503);
        let big = format!(r#"{{"text":"{}"}}"#, "a".repeat(8000));
        let r = client.post(format!("{}/v1/predict", server.url())).body(big).send().unwrap();
        assert_eq!(r.status().as_u16(), 413);
    }
}
