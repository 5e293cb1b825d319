//! HTTP front end for intent prediction and smart-reply suggestion.
//!
//! Endpoints: `POST /v1/predict`, `POST /v1/suggest`, `GET /health`.
//! Models are loaded once at startup and shared read-only between handlers.

pub mod config;
pub mod engine;

use std::future::Future;
use std::net::SocketAddr;
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde_json::json;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub use config::{ModelPaths, ServiceConfig, LISTEN_ENV};
pub use engine::{
    Engine, HealthResponse, PredictRequest, PredictResponse, RequestError, SuggestRequest, SuggestResponse,
    WireIntent,
};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot load model {0}")]
    Load(String),
    #[error(transparent)]
    Catalog(#[from] smartreply_core::replies::CatalogError),
    #[error("model files do not belong together: {0}")]
    Mismatch(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model loading task failed: {0}")]
    Task(String),
}

/// Shared handler state. The engine slot is empty until startup finishes.
#[derive(Clone)]
pub struct AppState {
    engine: Arc<OnceLock<Engine>>,
    timeout: Duration,
}

impl AppState {
    pub fn starting(timeout: Duration) -> Self {
        Self { engine: Arc::new(OnceLock::new()), timeout }
    }

    pub fn ready(engine: Engine, timeout: Duration) -> Self {
        let state = Self::starting(timeout);
        state.install(engine);
        state
    }

    /// Returns false if an engine was already installed.
    pub fn install(&self, engine: Engine) -> bool {
        self.engine.set(engine).is_ok()
    }

    pub fn is_ready(&self) -> bool {
        self.engine.get().is_some()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/predict", post(handle_predict))
        .route("/v1/suggest", post(handle_suggest))
        .route("/health", get(handle_health))
        .with_state(state)
}

fn error(status: StatusCode, reason: impl std::fmt::Display) -> Response {
    (status, Json(json!({ "error": reason.to_string() }))).into_response()
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, String> {
    serde_json::from_slice(body).map_err(|e| format!("malformed request: {e}"))
}

/// Runs CPU-bound model work off the async workers, bounded by the request
/// timeout.
async fn run_engine<T, F>(state: &AppState, work: F) -> Result<T, Response>
where
    T: Send + 'static,
    F: FnOnce(&Engine) -> T + Send + 'static,
{
    if !state.is_ready() {
        return Err(error(StatusCode::SERVICE_UNAVAILABLE, "models are still loading"));
    }
    let slot = Arc::clone(&state.engine);
    let task = tokio::task::spawn_blocking(move || work(slot.get().expect("checked above")));
    match tokio::time::timeout(state.timeout, task).await {
        Ok(Ok(value)) => Ok(value),
        Ok(Err(e)) => Err(error(StatusCode::INTERNAL_SERVER_ERROR, format!("handler failed: {e}"))),
        Err(_) => Err(error(StatusCode::SERVICE_UNAVAILABLE, "request timed out")),
    }
}

async fn handle_predict(State(state): State<AppState>, body: Bytes) -> Response {
    let request: PredictRequest = match parse(&body) {
        Ok(r) => r,
        Err(reason) => return error(StatusCode::BAD_REQUEST, reason),
    };
    match run_engine(&state, move |e| e.predict(&request)).await {
        Ok(Ok(resp)) => Json(resp).into_response(),
        Ok(Err(e @ RequestError::BadK { .. })) => error(StatusCode::BAD_REQUEST, e),
        Ok(Err(e)) => error(StatusCode::UNPROCESSABLE_ENTITY, e),
        Err(resp) => resp,
    }
}

async fn handle_suggest(State(state): State<AppState>, body: Bytes) -> Response {
    let request: SuggestRequest = match parse(&body) {
        Ok(r) => r,
        Err(reason) => return error(StatusCode::BAD_REQUEST, reason),
    };
    match run_engine(&state, move |e| e.suggest(&request)).await {
        Ok(resp) => Json(resp).into_response(),
        Err(resp) => resp,
    }
}

async fn handle_health(State(state): State<AppState>) -> Response {
    match state.engine.get() {
        Some(engine) => Json(HealthResponse { status: "ok".into(), model_versions: engine.model_versions() })
            .into_response(),
        None => (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(HealthResponse { status: "starting".into(), model_versions: Default::default() }),
        )
            .into_response(),
    }
}

/// A bound server with its models loaded.
pub struct RunningServer {
    local_addr: SocketAddr,
    state: AppState,
    shutdown: oneshot::Sender<()>,
    task: JoinHandle<std::io::Result<()>>,
}

impl RunningServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn state(&self) -> &AppState {
        &self.state
    }

    pub async fn shutdown(self) -> Result<(), ServiceError> {
        let _ = self.shutdown.send(());
        join(self.task).await
    }

    /// Serves until `signal` resolves, then shuts down gracefully.
    pub async fn serve_until<S: Future<Output = ()>>(self, signal: S) -> Result<(), ServiceError> {
        let RunningServer { shutdown, mut task, .. } = self;
        tokio::select! {
            _ = signal => {
                let _ = shutdown.send(());
                join(task).await
            }
            result = &mut task => flatten(result),
        }
    }
}

async fn join(task: JoinHandle<std::io::Result<()>>) -> Result<(), ServiceError> {
    flatten(task.await)
}

fn flatten(result: Result<std::io::Result<()>, tokio::task::JoinError>) -> Result<(), ServiceError> {
    match result {
        Ok(r) => r.map_err(ServiceError::Io),
        Err(e) => Err(ServiceError::Task(e.to_string())),
    }
}

/// Binds the listener, answers `/health` with "starting" while the models
/// load, and aborts if they cannot be loaded or do not match.
pub async fn start(config: ServiceConfig) -> Result<RunningServer, ServiceError> {
    config.validate()?;
    let listener = TcpListener::bind(config.socket_addr()?).await?;
    let local_addr = listener.local_addr()?;
    let state = AppState::starting(config.request_timeout());
    let (shutdown, signal) = oneshot::channel::<()>();
    let app = router(state.clone());
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = signal.await;
            })
            .await
    });
    log::info!("listening on {local_addr}; loading models");

    let ServiceConfig { model_paths, guard, intents_k, .. } = config;
    let loaded = tokio::task::spawn_blocking(move || Engine::load(&model_paths, guard, intents_k)).await;
    let engine = match loaded {
        Ok(Ok(engine)) => engine,
        Ok(Err(e)) => {
            let _ = shutdown.send(());
            let _ = task.await;
            return Err(e);
        }
        Err(e) => {
            let _ = shutdown.send(());
            let _ = task.await;
            return Err(ServiceError::Task(e.to_string()));
        }
    };
    for (name, version) in engine.model_versions() {
        log::info!("loaded {name} {version}");
    }
    state.install(engine);
    Ok(RunningServer { local_addr, state, shutdown, task })
}
